//! Rank-position metrics: NDCG and top-k precision/recall.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{MetricsError, RankedResult, ReferenceSummary};

/// Binary-gain NDCG over the full ranking with a `log₂(k + 1)` discount.
/// Relevant items missing from the ranking still count toward the ideal.
pub fn ndcg<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .enumerate()
        .filter(|(_, s)| relevant.contains(s.as_ref()))
        .map(|(k, _)| 1.0 / ((k + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..relevant.len()).map(|k| 1.0 / ((k + 2) as f64).log2()).sum();
    dcg / ideal
}

/// Macro mean of [`ndcg`] over results whose reference set is nonempty.
pub fn mean_ndcg(results: &[RankedResult], references: &ReferenceSummary) -> Result<f64, MetricsError> {
    references.check(results)?;
    let vals: Vec<f64> = results
        .iter()
        .filter_map(|r| {
            let refs = &references.entries[&r.key];
            (!refs.is_empty()).then(|| {
                let ranked: Vec<&str> = r.fingerprints().collect();
                ndcg(&ranked, refs)
            })
        })
        .collect();
    Ok(if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

/// Micro precision/recall/F1 of the top `k` unique sentences per query.
/// Queries with empty references contribute false positives only.
pub fn topk_prf(results: &[RankedResult], references: &ReferenceSummary, k: usize) -> Result<Prf, MetricsError> {
    references.check(results)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for r in results {
        let refs = &references.entries[&r.key];
        let hits = r.fingerprints().take(k).filter(|f| refs.contains(*f)).count();
        let retrieved = r.sentences.len().min(k);
        tp += hits;
        fp += retrieved - hits;
        fn_ += refs.len() - hits;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}
