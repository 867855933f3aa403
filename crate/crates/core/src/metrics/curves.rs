//! ROC and precision-recall curves over pooled scored examples.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MetricsError, RankedResult, ReferenceSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Score each sentence by `1 − percentile`.
    Percentile,
    /// Score each sentence by its raw attention or similarity.
    Attention,
}

impl std::fmt::Display for ThresholdSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThresholdSource::Percentile => "percentile",
            ThresholdSource::Attention => "attention",
        })
    }
}

impl FromStr for ThresholdSource {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "percentile" => Ok(ThresholdSource::Percentile),
            "attention" => Ok(ThresholdSource::Attention),
            other => Err(MetricsError::BadSubset(other.to_string())),
        }
    }
}

/// Confusion counts when predicting positive for `score ≥ threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// One point per distinct score, thresholds descending, preceded by
    /// the empty-prediction point at `+∞`.
    pub points: Vec<CurvePoint>,
    /// Trapezoidal area under (fpr, tpr); NaN without both classes.
    pub auroc: f64,
    /// `Σ (R_k − R_{k−1}) · P_k`; NaN without positives.
    pub average_precision: f64,
    pub positives: usize,
    pub negatives: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Curves for `(score, label)` pairs.
pub fn binary_curves(examples: &[(f64, bool)]) -> Curves {
    let mut ex = examples.to_vec();
    ex.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = ex.iter().filter(|e| e.1).count();
    let negatives = ex.len() - positives;
    let point = |threshold: f64, tp: usize, fp: usize| CurvePoint {
        threshold,
        tp,
        fp,
        tn: negatives - fp,
        fn_: positives - tp,
        tpr: ratio(tp, positives),
        fpr: ratio(fp, negatives),
        precision: if tp + fp == 0 { 1.0 } else { ratio(tp, tp + fp) },
        recall: ratio(tp, positives),
    };
    let mut points = vec![point(f64::INFINITY, 0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < ex.len() {
        let s = ex[i].0;
        while i < ex.len() && ex[i].0 == s {
            if ex[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(s, tp, fp));
    }
    let auroc = if positives == 0 || negatives == 0 {
        f64::NAN
    } else {
        // trapezoids on integer counts, one division at the end
        let twice_area: u128 = points
            .windows(2)
            .map(|w| (w[1].fp - w[0].fp) as u128 * (w[1].tp + w[0].tp) as u128)
            .sum();
        twice_area as f64 / (2 * positives as u128 * negatives as u128) as f64
    };
    let average_precision = if positives == 0 {
        f64::NAN
    } else {
        points
            .windows(2)
            .map(|w| (w[1].recall - w[0].recall) * w[1].precision)
            .sum()
    };
    Curves {
        points,
        auroc,
        average_precision,
        positives,
        negatives,
    }
}

/// Pooled sentence-retrieval curves: every unique sentence of every
/// (instance, query) is one example labelled by reference membership.
pub fn retrieval_curves(
    results: &[RankedResult],
    references: &ReferenceSummary,
    source: ThresholdSource,
) -> Result<Curves, MetricsError> {
    references.check(results)?;
    let mut ex = Vec::new();
    for r in results {
        let refs = &references.entries[&r.key];
        for s in &r.sentences {
            let score = match source {
                ThresholdSource::Percentile => 1.0 - s.percentile,
                ThresholdSource::Attention => s.score,
            };
            ex.push((score, refs.contains(&s.fingerprint)));
        }
    }
    Ok(binary_curves(&ex))
}

/// Curves for future-code prediction pooled over (instance, category).
pub fn code_prediction_metrics(probabilities: &[f64], labels: &[bool]) -> Result<Curves, MetricsError> {
    if probabilities.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(probabilities.len(), labels.len()));
    }
    let ex: Vec<(f64, bool)> = probabilities.iter().copied().zip(labels.iter().copied()).collect();
    Ok(binary_curves(&ex))
}
