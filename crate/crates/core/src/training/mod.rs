//! Distantly supervised training: weighted BCE over future-code labels,
//! negative resampling, Adam and per-epoch checkpoints.

pub mod gradcheck;
pub mod optim;
pub mod rebalance;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::TrainingInstance;
use crate::hierarchy::DiagnosisHierarchy;
use crate::model::{
    pointer_backward, pointer_forward, ModelError, ModelParameters, QueryInput, QueryMode, RankingModel,
};
use crate::scalar::{sc, Scalar};
use crate::tensor::ParamStore;

pub use gradcheck::{gradient_check, gradient_check_with, GradCheckReport};
pub use optim::{clip_grad_norm, Adam};
pub use rebalance::{
    compute_category_stats, negative_weight, resample_distribution, resample_negatives, CategoryStats,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("no training instances")]
    EmptyTrainingSet,
    #[error("batch has no queries")]
    EmptyBatch,
    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite { what: &'static str, epoch: usize, step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub downsample_p: f64,
    pub query_mode: QueryMode,
    /// `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Probabilities are clamped to `[c, 1 - c]` before the log; `0`
    /// disables clamping.
    pub probability_clamp: f64,
    /// When false, every original negative is kept and the batch weight
    /// is fixed at 1.
    pub rebalance: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 5,
            batch_size: 4,
            seed: 0,
            downsample_p: 0.01,
            query_mode: QueryMode::Description,
            max_grad_norm: Some(1.0),
            probability_clamp: 1e-7,
            rebalance: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.downsample_p > 0.0 && self.downsample_p <= 1.0) {
            return bad("downsample_p must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..0.5).contains(&self.probability_clamp) {
            return bad("probability_clamp must lie in [0, 0.5)");
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// An instance with tokenized sentences and resolved queries.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInstance {
    /// Token ids per sentence, [CLS] first; most recent sentences only.
    pub sentences: Vec<Vec<u32>>,
    pub queries: Vec<QueryInput>,
    pub labels: Vec<u8>,
}

impl PreparedInstance {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }
}

/// Tokenizes sentences and resolves every query once.
pub struct Preparer<'a, T> {
    model: &'a RankingModel<T>,
    hierarchy: &'a DiagnosisHierarchy,
    cache: HashMap<String, QueryInput>,
}

impl<'a, T: Scalar> Preparer<'a, T> {
    pub fn new(model: &'a RankingModel<T>, hierarchy: &'a DiagnosisHierarchy) -> Self {
        Preparer {
            model,
            hierarchy,
            cache: HashMap::new(),
        }
    }

    pub fn query(&mut self, category: &str) -> Result<QueryInput, ModelError> {
        if let Some(q) = self.cache.get(category) {
            return Ok(q.clone());
        }
        let spec = self.model.query_mode.spec(category);
        let q = self.model.resolve(&spec, self.hierarchy)?;
        self.cache.insert(category.to_string(), q.clone());
        Ok(q)
    }

    pub fn sentences(&self, inst: &TrainingInstance) -> Vec<Vec<u32>> {
        let cap = self.model.config().max_sentences_per_instance;
        let skip = inst.sentences.len().saturating_sub(cap);
        inst.sentences[skip..]
            .iter()
            .map(|s| self.model.sentence_tokens(&s.text))
            .collect()
    }

    /// Instance with its queries restricted to `categories` (label given).
    pub fn prepare(
        &mut self,
        inst: &TrainingInstance,
        queries: &[(&str, u8)],
    ) -> Result<PreparedInstance, ModelError> {
        let mut qs = Vec::with_capacity(queries.len());
        let mut labels = Vec::with_capacity(queries.len());
        for &(c, y) in queries {
            qs.push(self.query(c)?);
            labels.push(y);
        }
        Ok(PreparedInstance {
            sentences: self.sentences(inst),
            queries: qs,
            labels,
        })
    }

    /// Instance with all of its original queries.
    pub fn prepare_all(&mut self, inst: &TrainingInstance) -> Result<PreparedInstance, ModelError> {
        let qs: Vec<(&str, u8)> = inst
            .queries
            .iter()
            .map(String::as_str)
            .zip(inst.labels.iter().copied())
            .collect();
        self.prepare(inst, &qs)
    }
}

/// Loss settings that do not change within a batch.
#[derive(Debug, Clone, Copy)]
pub struct LossOptions {
    /// Multiplier on negative-label terms.
    pub negative_weight: f64,
    pub probability_clamp: f64,
}

fn bce<T: Scalar>(p: T, y: u8, clamp: f64) -> (T, bool) {
    let lo: T = sc(clamp);
    let hi: T = sc(1.0 - clamp);
    let clamped = clamp > 0.0 && (p < lo || p > hi);
    let pc = if clamp > 0.0 { p.max(lo).min(hi) } else { p };
    let l = if y == 1 { -pc.ln() } else { -(T::one() - pc).ln() };
    (l, clamped)
}

/// Loss of one instance (mean weighted BCE over its queries) and, when
/// `grads` is given, its gradient scaled by `scale`.
pub fn instance_loss<T: Scalar>(
    params: &ModelParameters<T>,
    inst: &PreparedInstance,
    opts: LossOptions,
    scale: T,
    mut grads: Option<&mut ParamStore<T>>,
) -> Result<T, ModelError> {
    if inst.sentences.is_empty() {
        return Err(ModelError::NoSentences);
    }
    let h = params.d_hidden();
    let mut traces = Vec::with_capacity(inst.sentences.len());
    let mut s = Vec::with_capacity(inst.sentences.len() * h);
    for tokens in &inst.sentences {
        let (tr, row) = params.cls_forward(tokens)?;
        traces.push(tr);
        s.extend(row);
    }
    let nq = T::from_count(inst.queries.len());
    let w_neg: T = sc(opts.negative_weight);
    let mut ds = vec![T::zero(); s.len()];
    let mut total = T::zero();
    for (q, &y) in inst.queries.iter().zip(&inst.labels) {
        let (q_trace, e) = match q {
            QueryInput::Row(r) => (None, params.store.get(params.indicator).row(*r).to_vec()),
            QueryInput::Tokens(t) => {
                let (tr, e) = params.cls_forward(t)?;
                (Some(tr), e)
            }
        };
        let pt = pointer_forward(&s, &e, &params.store, &params.head);
        let wt = if y == 1 { T::one() } else { w_neg };
        let (l, clamped) = bce(pt.probability, y, opts.probability_clamp);
        total += wt * l;
        let Some(g) = grads.as_deref_mut() else { continue };
        if clamped {
            continue;
        }
        let target = if y == 1 { T::one() } else { T::zero() };
        let d_logit = scale * wt * (pt.probability - target) / nq;
        let mut de = vec![T::zero(); h];
        pointer_backward(&pt, &s, &e, d_logit, &params.store, &params.head, g, &mut ds, &mut de);
        match (q, q_trace) {
            (QueryInput::Row(r), _) => {
                for (gv, &d) in g.get_mut(params.indicator).row_mut(*r).iter_mut().zip(&de) {
                    *gv += d;
                }
            }
            (QueryInput::Tokens(_), Some(tr)) => params.cls_backward(&tr, &de, g),
            (QueryInput::Tokens(_), None) => unreachable!("token queries always carry a trace"),
        }
    }
    if let Some(g) = grads {
        for (tr, d) in traces.iter().zip(ds.chunks(h)) {
            if d.iter().any(|v| *v != T::zero()) {
                params.cls_backward(tr, d, g);
            }
        }
    }
    Ok(total / nq)
}

/// Counts positives and negatives over a batch and returns the negative
/// weight `neg / pos` (1 with rebalancing off).
pub fn batch_weight(batch: &[PreparedInstance], rebalance: bool) -> f64 {
    if !rebalance {
        return 1.0;
    }
    let pos: usize = batch.iter().map(PreparedInstance::positives).sum();
    let neg: usize = batch.iter().map(PreparedInstance::negatives).sum();
    negative_weight(pos, neg)
}

/// Mean instance loss over the batch.
pub fn batch_loss<T: Scalar>(
    params: &ModelParameters<T>,
    batch: &[PreparedInstance],
    opts: LossOptions,
) -> Result<T, TrainError> {
    check_batch(batch)?;
    let losses: Result<Vec<T>, ModelError> = batch
        .par_iter()
        .map(|inst| instance_loss(params, inst, opts, T::one(), None))
        .collect();
    Ok(losses?.into_iter().sum::<T>() / T::from_count(batch.len()))
}

/// Batch loss and its gradient. Per-instance gradients are computed in
/// parallel and summed in batch order, so the result does not depend on
/// the thread count.
pub fn batch_loss_and_grad<T: Scalar>(
    params: &ModelParameters<T>,
    batch: &[PreparedInstance],
    opts: LossOptions,
) -> Result<(T, ParamStore<T>), TrainError> {
    check_batch(batch)?;
    let scale = T::one() / T::from_count(batch.len());
    let parts: Result<Vec<(T, ParamStore<T>)>, ModelError> = batch
        .par_iter()
        .map(|inst| {
            let mut g = params.store.zeros_like();
            let l = instance_loss(params, inst, opts, scale, Some(&mut g))?;
            Ok((l, g))
        })
        .collect();
    let mut grads = params.store.zeros_like();
    let mut loss = T::zero();
    for (l, g) in parts? {
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss * scale, grads))
}

fn check_batch(batch: &[PreparedInstance]) -> Result<(), TrainError> {
    if batch.iter().all(|i| i.queries.is_empty()) {
        return Err(TrainError::EmptyBatch);
    }
    if batch.iter().any(|i| i.queries.is_empty()) {
        return Err(TrainError::Config("every instance needs at least one query".into()));
    }
    Ok(())
}

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub w_b: f64,
    pub n_sampled_negatives: usize,
}

impl fmt::Display for LossRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.epoch, self.step, self.loss, self.w_b, self.n_sampled_negatives
        )
    }
}

pub const LOSS_LOG_HEADER: &str = "epoch\tstep\tloss\tw_b\tn_sampled_negatives";

pub fn write_loss_log<W: Write>(mut w: W, log: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "{LOSS_LOG_HEADER}")?;
    for r in log {
        writeln!(w, "{r}")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: RankingModel<T>,
    pub log: Vec<LossRecord>,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains `model` in place of its current parameters. `on_epoch` is called
/// after every epoch with the epoch number (1-based) and the model.
pub fn train<T, F>(
    mut model: RankingModel<T>,
    instances: &[TrainingInstance],
    hierarchy: &DiagnosisHierarchy,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome<T>, TrainError>
where
    T: Scalar,
    F: FnMut(usize, &RankingModel<T>) -> Result<(), TrainError>,
{
    config.validate()?;
    if instances.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if model.query_mode != config.query_mode {
        return Err(TrainError::Config(format!(
            "model query mode {} differs from config {}",
            model.query_mode, config.query_mode
        )));
    }
    let stats = compute_category_stats(instances);

    // Resolve every query and tokenize every sentence once.
    let snapshot = model.clone();
    let mut prep = Preparer::new(&snapshot, hierarchy);
    let mut base = Vec::with_capacity(instances.len());
    for inst in instances {
        let sentences = prep.sentences(inst);
        let mut qmap = HashMap::new();
        for q in &inst.queries {
            qmap.insert(q.clone(), prep.query(q)?);
        }
        base.push((sentences, qmap));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(
        &model.params.store,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.adam_eps,
    );
    let mut log = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut step = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            let mut sampled = 0usize;
            for &i in chunk {
                let inst = &instances[i];
                let (sentences, qmap) = &base[i];
                let mut queries = Vec::new();
                let mut labels = Vec::new();
                for q in inst.positives() {
                    queries.push(qmap[q].clone());
                    labels.push(1);
                }
                let negs: Vec<&str> = inst.negatives().collect();
                let chosen: Vec<String> = if config.rebalance {
                    resample_negatives(&negs, &stats, config.downsample_p, &mut rng)
                } else {
                    negs.iter().map(|s| s.to_string()).collect()
                };
                sampled += chosen.len();
                for c in &chosen {
                    queries.push(qmap[c.as_str()].clone());
                    labels.push(0);
                }
                batch.push(PreparedInstance {
                    sentences: sentences.clone(),
                    queries,
                    labels,
                });
            }
            let w_b = batch_weight(&batch, config.rebalance);
            let opts = LossOptions {
                negative_weight: w_b,
                probability_clamp: config.probability_clamp,
            };
            let (loss, mut grads) = batch_loss_and_grad(&model.params, &batch, opts)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { what: "loss", epoch, step });
            }
            if !grads.all_finite() {
                return Err(TrainError::NonFinite { what: "gradient", epoch, step });
            }
            if let Some(max) = config.max_grad_norm {
                clip_grad_norm(&mut grads, max);
            }
            opt.update(&mut model.params.store, &grads);
            log.push(LossRecord {
                epoch,
                step,
                loss,
                w_b,
                n_sampled_negatives: sampled,
            });
            sum += loss;
            batches += 1;
            step += 1;
        }
        let mean = sum / batches as f64;
        tracing::info!(epoch, loss = mean, "epoch finished");
        epoch_losses.push(mean);
        on_epoch(epoch, &model)?;
    }
    Ok(TrainOutcome {
        model,
        log,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        let (l, c) = bce(0.5f64, 1, 1e-7);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert!(!c);
        let (l, c) = bce(1.0f64, 1, 1e-7);
        assert!(l < 1e-6 && c);
        let (l, _) = bce(0.0f64, 0, 1e-7);
        assert!(l < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            downsample_p: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn loss_log_format() {
        let mut out = Vec::new();
        let r = LossRecord {
            epoch: 1,
            step: 0,
            loss: 0.5,
            w_b: 3.0,
            n_sampled_negatives: 3,
        };
        write_loss_log(&mut out, &[r]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{LOSS_LOG_HEADER}\n1\t0\t0.5\t3\t3\n"));
    }
}
