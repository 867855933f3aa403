use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::LexicalError;

pub const CLS: u32 = 0;
pub const SEP: u32 = 1;
pub const PAD: u32 = 2;
pub const UNK: u32 = 3;

const SPECIALS: [&str; 4] = ["[CLS]", "[SEP]", "[PAD]", "[UNK]"];
const VOCAB_HEADER: &str = "#distsum-vocab\tv1";

/// Lowercases and splits into runs of alphanumerics; every other
/// non-space character is a token of its own.
pub fn word_pieces(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

#[derive(Debug, Clone, Copy)]
pub struct VocabConfig {
    /// Total size including the four special tokens.
    pub max_size: usize,
    pub min_frequency: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            max_size: 30_000,
            min_frequency: 1,
        }
    }
}

impl Vocabulary {
    /// Tokens are ordered by descending frequency, then lexicographically.
    pub fn build<'a, I>(texts: I, config: VocabConfig) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in word_pieces(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= config.min_frequency && !SPECIALS.contains(&w.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = config.max_size.saturating_sub(SPECIALS.len());
        ranked.truncate(room);
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w))
    }

    fn from_tokens<I: IntoIterator<Item = String>>(rest: I) -> Self {
        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(rest)
            .collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids for one sentence, truncated to `max_tokens`.
    pub fn tokenize(&self, sentence: &str, max_tokens: usize) -> Vec<u32> {
        word_pieces(sentence)
            .iter()
            .take(max_tokens)
            .map(|w| self.id(w))
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{VOCAB_HEADER}")?;
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LexicalError> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h == VOCAB_HEADER => {}
            _ => return Err(LexicalError::Format("missing vocabulary header".into())),
        }
        let mut rest = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| LexicalError::Format(e.to_string()))?;
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| LexicalError::Format(format!("line {}: expected token<TAB>id", i + 2)))?;
            let id: usize = id
                .parse()
                .map_err(|_| LexicalError::Format(format!("line {}: bad id", i + 2)))?;
            if id != i {
                return Err(LexicalError::Format(format!("line {}: ids must be dense", i + 2)));
            }
            if i < SPECIALS.len() {
                if tok != SPECIALS[i] {
                    return Err(LexicalError::Format("special tokens out of place".into()));
                }
            } else {
                rest.push(tok.to_string());
            }
        }
        Ok(Self::from_tokens(rest))
    }

    /// Rebuilds a vocabulary from its full id-ordered token list.
    pub fn from_token_list(tokens: Vec<String>) -> Result<Self, LexicalError> {
        if tokens.len() < SPECIALS.len() || tokens.iter().zip(SPECIALS).any(|(t, s)| t != s) {
            return Err(LexicalError::Format("special tokens out of place".into()));
        }
        let v = Self::from_tokens(tokens.into_iter().skip(SPECIALS.len()));
        if v.ids.len() != v.tokens.len() {
            return Err(LexicalError::Format("duplicate tokens".into()));
        }
        Ok(v)
    }
}
