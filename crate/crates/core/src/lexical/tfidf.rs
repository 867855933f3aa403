use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use super::LexicalError;

const TFIDF_HEADER: &str = "#distsum-tfidf\tv1";

/// Terms are lowercase alphanumeric runs of at least two characters.
pub fn tfidf_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '_' {
            cur.push(ch);
        } else if !cur.is_empty() {
            if cur.chars().count() >= 2 {
                out.push(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
        }
    }
    if cur.chars().count() >= 2 {
        out.push(cur);
    }
    out
}

/// Sparse vector as (term index, weight) pairs sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector(pub Vec<(u32, f64)>);

impl SparseVector {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|(_, w)| *w == 0.0)
    }
}

/// Cosine similarity of sparse vectors; 0 when either has zero norm.
pub fn cosine_sparse(u: &SparseVector, v: &SparseVector) -> f64 {
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.dot(v) / (nu * nv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    terms: BTreeMap<String, u32>,
    idf: Vec<f64>,
    n_documents: usize,
}

impl TfidfModel {
    /// Fits smooth idf weights: `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit<'a, I>(documents: I) -> Result<Self, LexicalError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for doc in documents {
            n += 1;
            let mut seen: Vec<String> = tfidf_terms(doc);
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        if n == 0 {
            return Err(LexicalError::EmptyCorpus);
        }
        let mut terms = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (t, d)) in df.into_iter().enumerate() {
            terms.insert(t, i as u32);
            idf.push(((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0);
        }
        Ok(TfidfModel {
            terms,
            idf,
            n_documents: n,
        })
    }

    pub fn n_documents(&self) -> usize {
        self.n_documents
    }

    pub fn vocabulary_len(&self) -> usize {
        self.idf.len()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.terms.get(term).map(|&i| self.idf[i as usize])
    }

    pub fn term_index(&self, term: &str) -> Option<u32> {
        self.terms.get(term).copied()
    }

    /// Raw term count times idf, L2-normalized. Out-of-vocabulary terms are
    /// dropped, so a text with none in vocabulary maps to the zero vector.
    pub fn vector(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for t in tfidf_terms(text) {
            if let Some(&i) = self.terms.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i as usize]))
            .collect();
        v.sort_by_key(|&(i, _)| i);
        let mut sv = SparseVector(v);
        let norm = sv.norm();
        if norm > 0.0 {
            for (_, w) in sv.0.iter_mut() {
                *w /= norm;
            }
        }
        sv
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine_sparse(&self.vector(a), &self.vector(b))
    }

    /// `idf` is written with the shortest representation that parses back
    /// to the same `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TFIDF_HEADER}\t{}", self.n_documents)?;
        for (t, &i) in &self.terms {
            writeln!(w, "{t}\t{}", self.idf[i as usize])?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, LexicalError> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            _ => return Err(LexicalError::Format("missing tf-idf header".into())),
        };
        let n_documents = header
            .strip_prefix(TFIDF_HEADER)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| LexicalError::Format("bad tf-idf header".into()))?;
        let mut terms = BTreeMap::new();
        let mut idf = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| LexicalError::Format(e.to_string()))?;
            let (t, w) = line
                .split_once('\t')
                .ok_or_else(|| LexicalError::Format(format!("line {}: expected term<TAB>idf", i + 2)))?;
            let w: f64 = w
                .parse()
                .map_err(|_| LexicalError::Format(format!("line {}: bad idf", i + 2)))?;
            if !(w > 0.0) {
                return Err(LexicalError::Format(format!("line {}: idf must be positive", i + 2)));
            }
            terms.insert(t.to_string(), i as u32);
            idf.push(w);
        }
        Ok(TfidfModel {
            terms,
            idf,
            n_documents,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn term_in_every_document_has_unit_idf() {
        let m = TfidfModel::fit(["chest pain", "chest clear"]).unwrap();
        assert_eq!(m.idf("chest"), Some(1.0));
    }

    #[test]
    fn two_document_weights() {
        let m = TfidfModel::fit(["chest pain pain", "chest clear"]).unwrap();
        // hand: idf(chest)=1, idf(pain)=idf(clear)=ln(3/2)+1
        let rare = (1.5f64).ln() + 1.0;
        let d1 = m.vector("chest pain pain");
        let raw = [1.0, 2.0 * rare];
        let n = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        let chest = m.term_index("chest").unwrap();
        let pain = m.term_index("pain").unwrap();
        let expect = {
            let mut e = vec![(chest, raw[0] / n), (pain, raw[1] / n)];
            e.sort_by_key(|x| x.0);
            e
        };
        for ((i, w), (ei, ew)) in d1.0.iter().zip(expect.iter()) {
            assert_eq!(i, ei);
            assert!((w - ew).abs() < 1e-12);
        }
        let d2 = m.vector("chest clear");
        let n2 = (1.0 + rare * rare).sqrt();
        let clear = m.term_index("clear").unwrap();
        let w_clear = d2.0.iter().find(|x| x.0 == clear).unwrap().1;
        assert!((w_clear - rare / n2).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_and_empty_corpus() {
        let m = TfidfModel::fit(["chest pain"]).unwrap();
        assert!(m.vector("zebra a").0.is_empty());
        assert_eq!(m.similarity("zebra", "chest"), 0.0);
        assert!(matches!(
            TfidfModel::fit(std::iter::empty::<&str>()),
            Err(LexicalError::EmptyCorpus)
        ));
    }

    #[test]
    fn single_character_terms_dropped() {
        assert_eq!(tfidf_terms("A b-cd, x-ray 3.5mm"), vec!["cd", "ray", "5mm"]);
    }

    #[test]
    fn round_trip_is_exact() {
        let m = TfidfModel::fit(["chest pain pain", "chest clear", "left frontal lesion"]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = TfidfModel::read_from(&buf[..]).unwrap();
        assert_eq!(m, back);
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    proptest! {
        #[test]
        fn unit_or_zero_norm(words in proptest::collection::vec("[a-f]{1,3}", 0..12)) {
            let m = TfidfModel::fit(["ab cd ef", "abc de", "aa bb cc dd"]).unwrap();
            let v = m.vector(&words.join(" "));
            let n = v.norm();
            prop_assert!(n.abs() < 1e-9 || (n - 1.0).abs() < 1e-9);
        }

        #[test]
        fn disjoint_vocabularies_are_orthogonal(a in "[a-m]{2,4}( [a-m]{2,4}){0,4}", b in "[n-z]{2,4}( [n-z]{2,4}){0,4}") {
            let m = TfidfModel::fit([a.as_str(), b.as_str()]).unwrap();
            prop_assert_eq!(m.similarity(&a, &b), 0.0);
        }
    }
}
