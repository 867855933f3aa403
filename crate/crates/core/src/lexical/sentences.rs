//! Rule-based sentence splitting. The rules and the abbreviation list live
//! in `data/abbreviations.txt`.

use std::collections::HashSet;
use std::sync::OnceLock;

const ABBREVIATIONS: &str = include_str!("../../data/abbreviations.txt");

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        ABBREVIATIONS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}'];

fn ends_with_terminal(word: &str) -> bool {
    word.trim_end_matches(CLOSERS)
        .ends_with(['.', '!', '?'])
}

fn is_abbreviation(word: &str) -> bool {
    let core = word.trim_end_matches(CLOSERS).to_lowercase();
    let core = core.trim_start_matches(['(', '[', '"', '\'']);
    abbreviations().contains(core)
}

/// Splits on blank lines, then on terminal punctuation within each
/// paragraph. Whitespace inside a sentence is collapsed to single spaces.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for paragraph in paragraphs(text) {
        let words: Vec<&str> = paragraph.split_whitespace().collect();
        let mut start = 0;
        for i in 0..words.len() {
            let last = i + 1 == words.len();
            let boundary = last
                || (ends_with_terminal(words[i])
                    && !is_abbreviation(words[i])
                    && !words[i + 1]
                        .chars()
                        .next()
                        .is_some_and(char::is_lowercase));
            if boundary {
                out.push(words[start..=i].join(" "));
                start = i + 1;
            }
        }
    }
    out
}

fn paragraphs(text: &str) -> Vec<&str> {
    let mut paras = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != b'\n' && (bytes[j] as char).is_ascii_whitespace() {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'\n' {
                paras.push(&text[start..i]);
                while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                    j += 1;
                }
                start = j;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    paras.push(&text[start..]);
    paras.retain(|p| !p.trim().is_empty());
    paras
}

/// Lowercase, whitespace-collapsed form used to identify "the same
/// sentence" across reports and annotation sessions.
pub fn fingerprint(sentence: &str) -> String {
    sentence
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn collapse(s: &str) -> String {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn basic() {
        assert_eq!(split_sentences("A. B."), vec!["A.", "B."]);
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n\n  ").is_empty());
        assert_eq!(split_sentences("no terminal"), vec!["no terminal"]);
    }

    #[test]
    fn abbreviations_and_newlines() {
        let text = "Seen by Dr. Smith today. Symptoms, e.g. headache, resolved!\n\
                    Follow up in 3.5 weeks? Yes.\n\n\
                    Impression: stable\nfindings\n \nNew line";
        assert_eq!(
            split_sentences(text),
            vec![
                "Seen by Dr. Smith today.",
                "Symptoms, e.g. headache, resolved!",
                "Follow up in 3.5 weeks?",
                "Yes.",
                "Impression: stable findings",
                "New line",
            ]
        );
    }

    #[test]
    fn lowercase_continuation_and_closers() {
        assert_eq!(
            split_sentences("Normal (see prior.) Next one. then lower."),
            vec!["Normal (see prior.)", "Next one. then lower."]
        );
    }

    #[test]
    fn fingerprints() {
        assert_eq!(fingerprint("  Chest   Pain.\n"), "chest pain.");
    }

    proptest! {
        #[test]
        fn concatenation_preserves_text(s in "[a-zA-Z .!?\n]{0,80}") {
            let parts = split_sentences(&s);
            prop_assert!(parts.iter().all(|p| !p.is_empty()));
            prop_assert_eq!(parts.join(" "), collapse(&s));
        }
    }
}
