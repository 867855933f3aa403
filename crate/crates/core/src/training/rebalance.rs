//! Negative-category resampling and the per-batch negative weight.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Binomial;

use crate::extraction::TrainingInstance;

/// Positive and negative occurrence counts per category over the
/// training instances.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryStats {
    counts: BTreeMap<String, (usize, usize)>,
    total_pos: usize,
}

impl CategoryStats {
    /// `(pos, neg)`; `(0, 0)` for categories never queried.
    pub fn get(&self, category: &str) -> (usize, usize) {
        self.counts.get(category).copied().unwrap_or((0, 0))
    }

    pub fn total_positive(&self) -> usize {
        self.total_pos
    }

    pub fn total_negative(&self) -> usize {
        self.counts.values().map(|c| c.1).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, usize)> {
        self.counts.iter().map(|(k, &(p, n))| (k.as_str(), p, n))
    }

    /// Unnormalized resampling weight `(pos_c / Σ pos) · (1 / neg_c)`,
    /// zero when either count is zero.
    pub fn weight(&self, category: &str) -> f64 {
        let (pos, neg) = self.get(category);
        if pos == 0 || neg == 0 || self.total_pos == 0 {
            return 0.0;
        }
        (pos as f64 / self.total_pos as f64) / neg as f64
    }
}

pub fn compute_category_stats(instances: &[TrainingInstance]) -> CategoryStats {
    let mut stats = CategoryStats::default();
    for inst in instances {
        for (q, &y) in inst.queries.iter().zip(&inst.labels) {
            let e = stats.counts.entry(q.clone()).or_default();
            if y == 1 {
                e.0 += 1;
                stats.total_pos += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    stats
}

/// Target distribution over `negatives` (normalized weights), or `None`
/// when every weight is zero.
pub fn resample_distribution(negatives: &[&str], stats: &CategoryStats) -> Option<Vec<f64>> {
    let w: Vec<f64> = negatives.iter().map(|c| stats.weight(c)).collect();
    let total: f64 = w.iter().sum();
    (total > 0.0).then(|| w.iter().map(|x| x / total).collect())
}

/// Draws `n ~ Binomial(|negatives|, p)` categories with replacement from
/// the instance's original negatives, weighted by [`CategoryStats::weight`].
pub fn resample_negatives<R: Rng + ?Sized>(
    negatives: &[&str],
    stats: &CategoryStats,
    p: f64,
    rng: &mut R,
) -> Vec<String> {
    if negatives.is_empty() {
        return Vec::new();
    }
    let n = Binomial::new(negatives.len() as u64, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng) as usize;
    let w: Vec<f64> = negatives.iter().map(|c| stats.weight(c)).collect();
    if n == 0 || w.iter().all(|&x| x == 0.0) {
        return Vec::new();
    }
    let dist = WeightedIndex::new(&w).expect("nonnegative weights with a positive sum");
    (0..n).map(|_| negatives[dist.sample(rng)].to_string()).collect()
}

/// `neg / pos` over a batch's labels; 1 when the batch has no positives.
pub fn negative_weight(positives: usize, negatives: usize) -> f64 {
    if positives == 0 {
        1.0
    } else {
        negatives as f64 / positives as f64
    }
}
