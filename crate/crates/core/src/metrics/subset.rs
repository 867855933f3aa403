//! Evaluation subsets: subtle evidence, query depth and custom queries.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsError, RankedResult, ReferenceSummary};
use crate::lexical::TfidfModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    /// Drop reference sentences with nonzero TF-IDF similarity to the
    /// query text, from both the references and the rankings.
    TfidfZero,
    /// Keep queries at this hierarchy depth.
    Depth(usize),
    /// Keep free-text (custom) queries only.
    Custom,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subset::All => f.write_str("all"),
            Subset::TfidfZero => f.write_str("tfidf_zero"),
            Subset::Depth(d) => write!(f, "depth={d}"),
            Subset::Custom => f.write_str("custom"),
        }
    }
}

impl FromStr for Subset {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Subset::All),
            "tfidf_zero" => Ok(Subset::TfidfZero),
            "custom" | "custom_only" => Ok(Subset::Custom),
            _ => s
                .strip_prefix("depth=")
                .and_then(|d| d.parse().ok())
                .filter(|&d| d >= 1)
                .map(Subset::Depth)
                .ok_or_else(|| MetricsError::BadSubset(s.to_string())),
        }
    }
}

/// Extra inputs some subsets need.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubsetContext<'a> {
    pub tfidf: Option<&'a TfidfModel>,
}

pub fn subset_filter(
    results: &[RankedResult],
    references: &ReferenceSummary,
    subset: Subset,
    ctx: SubsetContext<'_>,
) -> Result<(Vec<RankedResult>, ReferenceSummary), MetricsError> {
    references.check(results)?;
    let mut refs = ReferenceSummary::new(references.source);
    let mut out = Vec::new();
    for r in results {
        let rs = &references.entries[&r.key];
        let keep = match subset {
            Subset::All | Subset::TfidfZero => true,
            Subset::Depth(d) => r.depth == Some(d),
            Subset::Custom => r.custom,
        };
        if !keep {
            continue;
        }
        if subset == Subset::TfidfZero {
            let tfidf = ctx
                .tfidf
                .ok_or_else(|| MetricsError::BadSubset("tfidf_zero needs a TF-IDF model".into()))?;
            let q = tfidf.vector(&r.query_text);
            let overlapping: Vec<&String> = rs
                .iter()
                .filter(|fp| crate::lexical::cosine_sparse(&tfidf.vector(fp), &q) != 0.0)
                .collect();
            let mut r2 = r.clone();
            r2.sentences.retain(|s| !overlapping.contains(&&s.fingerprint));
            let kept = rs.iter().filter(|fp| !overlapping.contains(fp)).cloned().collect();
            refs.entries.insert(r.key.clone(), kept);
            out.push(r2);
        } else {
            refs.entries.insert(r.key.clone(), rs.clone());
            out.push(r.clone());
        }
    }
    Ok((out, refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ReferenceSource, ResultKey};

    fn result(q: &str, text: &str, depth: usize, custom: bool, sents: &[&str]) -> RankedResult {
        let scores: Vec<f64> = (0..sents.len()).map(|i| 1.0 / (i + 1) as f64).collect();
        RankedResult::from_scores(
            ResultKey {
                patient_id: "p".into(),
                time_point: 1,
                query_id: q.into(),
            },
            text.into(),
            Some(depth),
            custom,
            sents,
            &scores,
        )
        .unwrap()
    }

    #[test]
    fn parse_names() {
        assert_eq!("depth=3".parse::<Subset>().unwrap(), Subset::Depth(3));
        assert_eq!("tfidf_zero".parse::<Subset>().unwrap(), Subset::TfidfZero);
        assert!("depth=0".parse::<Subset>().is_err());
        assert!("nope".parse::<Subset>().is_err());
        assert_eq!(Subset::Depth(2).to_string(), "depth=2");
    }

    #[test]
    fn filters() {
        let a = result("stroke", "ischemic stroke", 2, false, &["acute ischemic stroke", "subtle signal change", "normal"]);
        let b = result("mine", "headache", 1, true, &["headache noted", "normal"]);
        let mut refs = ReferenceSummary::new(ReferenceSource::Oracle);
        refs.insert(a.key.clone(), "acute ischemic stroke");
        refs.insert(a.key.clone(), "subtle signal change");
        refs.insert(b.key.clone(), "headache noted");
        let tfidf = TfidfModel::fit(
            ["acute ischemic stroke", "subtle signal change", "normal", "headache noted", "ischemic stroke", "headache"],
        )
        .unwrap();
        let ctx = SubsetContext { tfidf: Some(&tfidf) };
        let results = vec![a.clone(), b.clone()];

        let (r, s) = subset_filter(&results, &refs, Subset::TfidfZero, ctx).unwrap();
        assert_eq!(s.get(&a.key).unwrap().len(), 1);
        assert!(s.get(&b.key).unwrap().is_empty());
        assert_eq!(r[0].sentences.len(), 2);
        assert_eq!(r[0].sentences[0].percentile, a.sentences[1].percentile);

        let (r, _) = subset_filter(&results, &refs, Subset::Custom, ctx).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].custom);
        let (r, _) = subset_filter(&results, &refs, Subset::Depth(2), ctx).unwrap();
        assert_eq!(r[0].key.query_id, "stroke");
        assert!(subset_filter(&results, &refs, Subset::TfidfZero, SubsetContext::default()).is_err());
    }
}
