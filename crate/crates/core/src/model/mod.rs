//! Sentence encoder, query embeddings, attention pointer and prediction
//! head, plus the two unsupervised baseline scorers.

pub mod baselines;
pub mod checkpoint;
pub mod encoder;
pub mod pointer;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::DiagnosisHierarchy;
use crate::lexical::{Vocabulary, CLS, SEP};
use crate::scalar::Scalar;
use crate::tensor::{matmul, ParamId, ParamStore, Tensor};

pub use baselines::{contextual_scores, tfidf_scores};
pub use encoder::{encoder_backward, encoder_forward, EncoderConfig, EncoderIds, EncoderTrace};
pub use pointer::{attend, pointer_backward, pointer_forward, predict, HeadIds, PointerTrace};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty token sequence")]
    EmptyInput,
    #[error("token id {0} outside the vocabulary")]
    TokenOutOfRange(u32),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("instance has no sentences")]
    NoSentences,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a trained model embeds hierarchy categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Indicator,
    Description,
    #[serde(alias = "hierarchy_path")]
    Hierarchy,
}

impl QueryMode {
    pub const ALL: [QueryMode; 3] = [QueryMode::Indicator, QueryMode::Description, QueryMode::Hierarchy];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryMode::Indicator => "indicator",
            QueryMode::Description => "description",
            QueryMode::Hierarchy => "hierarchy",
        }
    }

    /// Query spec this mode uses for a hierarchy category.
    pub fn spec(self, category: &str) -> QuerySpec {
        let category = category.to_string();
        match self {
            QueryMode::Indicator => QuerySpec::Indicator { category },
            QueryMode::Description => QuerySpec::Description { category },
            QueryMode::Hierarchy => QuerySpec::HierarchyPath { category },
        }
    }
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indicator" => Ok(QueryMode::Indicator),
            "description" => Ok(QueryMode::Description),
            "hierarchy" | "hierarchy_path" => Ok(QueryMode::Hierarchy),
            other => Err(ModelError::Config(format!("unknown query mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum QuerySpec {
    Indicator { category: String },
    Description { category: String },
    HierarchyPath { category: String },
    FreeText { text: String },
}

impl QuerySpec {
    pub fn category(&self) -> Option<&str> {
        match self {
            QuerySpec::Indicator { category }
            | QuerySpec::Description { category }
            | QuerySpec::HierarchyPath { category } => Some(category),
            QuerySpec::FreeText { .. } => None,
        }
    }
}

/// What the encoder sees for a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryInput {
    /// Row of the indicator table.
    Row(usize),
    /// Token ids, [CLS] included.
    Tokens(Vec<u32>),
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    pub config: EncoderConfig,
    pub store: ParamStore<T>,
    pub encoder: EncoderIds,
    pub head: HeadIds,
    /// One row per hierarchy category, `n_categories × d_hidden`.
    pub indicator: ParamId,
}

impl<T: Scalar> ModelParameters<T> {
    pub fn init(config: EncoderConfig, n_categories: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let encoder = EncoderIds::register(&config, &mut store, &mut rng);
        let head = HeadIds::register(config.d_model, config.d_hidden, &mut store, &mut rng);
        let indicator = store.push(
            "query.indicator",
            Tensor::normal(&[n_categories, config.d_hidden], pointer::embedding_gain(config.d_hidden), &mut rng),
        );
        Ok(ModelParameters {
            config,
            store,
            encoder,
            head,
            indicator,
        })
    }

    /// Rebuilds handles for a store read from disk, checking every shape.
    pub fn from_store(config: EncoderConfig, store: ParamStore<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let encoder = EncoderIds::locate(&config, &store)?;
        let f = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))
        };
        let head = HeadIds {
            u0: f("proj.u0")?,
            b0: f("proj.b0")?,
            u1: f("head.u1")?,
            b1: f("head.b1")?,
            u2: f("head.u2")?,
            b2: f("head.b2")?,
        };
        let indicator = f("query.indicator")?;
        let reference = Self::init(config.clone(), store.get(indicator).shape[0], 0)?;
        if reference.store.names() != store.names() {
            return Err(ModelError::Checkpoint("tensor set does not match the config".into()));
        }
        for ((name, a), b) in reference.store.iter().zip(store.tensors()) {
            if a.shape != b.shape {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name}: shape {:?}, expected {:?}",
                    b.shape, a.shape
                )));
            }
            if !b.data.iter().all(|v| v.is_finite()) {
                return Err(ModelError::Checkpoint(format!("tensor {name} has non-finite values")));
            }
        }
        Ok(ModelParameters {
            config,
            store,
            encoder,
            head,
            indicator,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.store.get(self.indicator).shape[0]
    }

    pub fn d_hidden(&self) -> usize {
        self.config.d_hidden
    }

    /// Encoder pass over `tokens` ([CLS] already first) and the projected
    /// [CLS] state `U₀ h + b₀`.
    pub fn cls_forward(&self, tokens: &[u32]) -> Result<(EncoderTrace<T>, Vec<T>), ModelError> {
        let trace = encoder_forward(&self.config, &self.encoder, &self.store, tokens)?;
        let out = self.project(trace.row(0, self.config.d_model));
        Ok((trace, out))
    }

    fn project(&self, h: &[T]) -> Vec<T> {
        let dh = self.config.d_hidden;
        let mut out = vec![T::zero(); dh];
        matmul(h, self.store.data(self.head.u0), 1, self.config.d_model, dh, &mut out);
        for (o, &b) in out.iter_mut().zip(self.store.data(self.head.b0)) {
            *o += b;
        }
        out
    }

    /// Backward of [`cls_forward`]: accumulates into `grads` given the
    /// gradient of the projected vector.
    pub fn cls_backward(&self, trace: &EncoderTrace<T>, d_out: &[T], grads: &mut ParamStore<T>) {
        let d = self.config.d_model;
        let dh = self.config.d_hidden;
        let h = trace.row(0, d);
        {
            let gu0 = grads.data_mut(self.head.u0);
            for (i, &hv) in h.iter().enumerate() {
                for (g, &dv) in gu0[i * dh..(i + 1) * dh].iter_mut().zip(d_out) {
                    *g += hv * dv;
                }
            }
        }
        for (g, &dv) in grads.data_mut(self.head.b0).iter_mut().zip(d_out) {
            *g += dv;
        }
        let u0 = self.store.data(self.head.u0);
        let mut d_output = vec![T::zero(); trace.len() * d];
        for (i, dh_i) in d_output[..d].iter_mut().enumerate() {
            *dh_i = crate::tensor::dot(&u0[i * dh..(i + 1) * dh], d_out);
        }
        encoder_backward(&self.config, &self.encoder, &self.store, trace, &d_output, grads);
    }

    /// `U₀ · h_[CLS] + b₀` for a token sequence; [CLS] is prepended here.
    pub fn encode_cls(&self, tokens: &[u32]) -> Result<Vec<T>, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let mut seq = Vec::with_capacity(tokens.len() + 1);
        seq.push(CLS);
        seq.extend_from_slice(tokens);
        Ok(self.cls_forward(&seq)?.1)
    }

    /// Mean of the encoder outputs over all positions, no [CLS].
    pub fn encode_mean(&self, tokens: &[u32]) -> Result<Vec<T>, ModelError> {
        let trace = encoder_forward(&self.config, &self.encoder, &self.store, tokens)?;
        let d = self.config.d_model;
        let mut out = vec![T::zero(); d];
        for row in trace.output.chunks(d) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let n = T::from_count(trace.len());
        out.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }

    /// Sentence embeddings stacked row-wise (`m × d_hidden`).
    pub fn sentence_matrix(&self, token_lists: &[Vec<u32>]) -> Result<Vec<T>, ModelError> {
        let mut s = Vec::with_capacity(token_lists.len() * self.config.d_hidden);
        for tokens in token_lists {
            s.extend(self.cls_forward(tokens)?.1);
        }
        Ok(s)
    }

    pub fn query_embedding(&self, input: &QueryInput) -> Result<Vec<T>, ModelError> {
        match input {
            QueryInput::Row(r) => {
                if *r >= self.n_categories() {
                    return Err(ModelError::UnknownCategory(format!("row {r}")));
                }
                Ok(self.store.get(self.indicator).row(*r).to_vec())
            }
            QueryInput::Tokens(t) => Ok(self.cls_forward(t)?.1),
        }
    }
}

/// `[CLS]` followed by the sentence tokens.
pub fn sentence_tokens(vocab: &Vocabulary, text: &str, max_tokens: usize) -> Vec<u32> {
    let mut seq = vec![CLS];
    seq.extend(vocab.tokenize(text, max_tokens));
    seq
}

/// Path encoding `[CLS] d₁ [SEP] d₂ … [SEP] d_L`.
pub fn path_tokens(vocab: &Vocabulary, descriptions: &[&str], max_tokens: usize) -> Vec<u32> {
    let mut seq = vec![CLS];
    for (i, d) in descriptions.iter().enumerate() {
        if i > 0 {
            seq.push(SEP);
        }
        seq.extend(vocab.tokenize(d, max_tokens));
    }
    seq
}

/// Resolves a query to indicator row or token sequence.
///
/// `categories` lists the category ids backing the indicator rows.
pub fn resolve_query(
    spec: &QuerySpec,
    hierarchy: &DiagnosisHierarchy,
    categories: &[String],
    vocab: &Vocabulary,
    max_tokens: usize,
) -> Result<QueryInput, ModelError> {
    let node = |id: &str| {
        hierarchy
            .get(id)
            .ok_or_else(|| ModelError::UnknownCategory(id.to_string()))
    };
    match spec {
        QuerySpec::Indicator { category } => categories
            .iter()
            .position(|c| c == category)
            .map(QueryInput::Row)
            .ok_or_else(|| ModelError::UnknownCategory(category.clone())),
        QuerySpec::Description { category } => Ok(QueryInput::Tokens(sentence_tokens(
            vocab,
            &node(category)?.description,
            max_tokens,
        ))),
        QuerySpec::HierarchyPath { category } => {
            node(category)?;
            let idx = hierarchy.index_of(category).expect("node exists");
            let descs = hierarchy.path_descriptions(idx);
            Ok(QueryInput::Tokens(path_tokens(vocab, &descs, max_tokens)))
        }
        QuerySpec::FreeText { text } => {
            if text.trim().is_empty() {
                return Err(ModelError::InvalidQuery("free text is empty".into()));
            }
            Ok(QueryInput::Tokens(sentence_tokens(vocab, text, max_tokens)))
        }
    }
}

/// Sentence indices by score descending, ties by position ascending.
pub fn ranking_order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Per-sentence relevance for one (instance, query).
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceRanking<T> {
    /// Aligned with the input sentences; sentences dropped by the instance
    /// cap score zero.
    pub scores: Vec<T>,
    /// Indices sorted by score descending.
    pub order: Vec<usize>,
    /// Predicted probability that the queried code appears in the future.
    pub probability: Option<T>,
    /// Number of leading (oldest) sentences dropped by the cap.
    pub truncated: usize,
}

impl<T: Scalar> RelevanceRanking<T> {
    pub fn from_scores(scores: Vec<T>, probability: Option<T>, truncated: usize) -> Self {
        let order = ranking_order(&scores);
        RelevanceRanking {
            scores,
            order,
            probability,
            truncated,
        }
    }
}

/// Parameters together with the vocabulary, category table and training
/// query mode: everything a checkpoint holds.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingModel<T> {
    pub params: ModelParameters<T>,
    pub vocab: Vocabulary,
    /// Category ids backing the indicator rows, in hierarchy order.
    pub categories: Vec<String>,
    pub query_mode: QueryMode,
}

impl<T: Scalar> RankingModel<T> {
    pub fn new(
        config: EncoderConfig,
        vocab: Vocabulary,
        hierarchy: &DiagnosisHierarchy,
        query_mode: QueryMode,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if config.vocab_size != vocab.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} does not match vocabulary of {}",
                config.vocab_size,
                vocab.len()
            )));
        }
        let categories: Vec<String> = hierarchy.nodes().iter().map(|n| n.id.clone()).collect();
        let params = ModelParameters::init(config, categories.len(), seed)?;
        Ok(RankingModel {
            params,
            vocab,
            categories,
            query_mode,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }

    pub fn max_tokens(&self) -> usize {
        self.params.config.max_tokens_per_sentence
    }

    pub fn sentence_tokens(&self, text: &str) -> Vec<u32> {
        sentence_tokens(&self.vocab, text, self.max_tokens())
    }

    /// Spec this model uses for a hierarchy category or free text.
    pub fn spec_for(&self, category: Option<&str>, free_text: Option<&str>) -> Result<QuerySpec, ModelError> {
        match (category, free_text) {
            (Some(c), _) => Ok(self.query_mode.spec(c)),
            (None, Some(t)) => {
                if self.query_mode == QueryMode::Indicator {
                    return Err(ModelError::InvalidQuery(
                        "indicator models cannot score free-text queries".into(),
                    ));
                }
                Ok(QuerySpec::FreeText { text: t.to_string() })
            }
            (None, None) => Err(ModelError::InvalidQuery("no category or text".into())),
        }
    }

    pub fn resolve(&self, spec: &QuerySpec, hierarchy: &DiagnosisHierarchy) -> Result<QueryInput, ModelError> {
        if self.query_mode == QueryMode::Indicator && !matches!(spec, QuerySpec::Indicator { .. }) {
            return Err(ModelError::InvalidQuery(
                "indicator models only accept indicator queries".into(),
            ));
        }
        resolve_query(spec, hierarchy, &self.categories, &self.vocab, self.max_tokens())
    }

    pub fn embed_query(&self, spec: &QuerySpec, hierarchy: &DiagnosisHierarchy) -> Result<Vec<T>, ModelError> {
        let input = self.resolve(spec, hierarchy)?;
        self.params.query_embedding(&input)
    }

    /// Attention scores and code probability over `sentences`, keeping the
    /// most recent `max_sentences_per_instance`.
    pub fn score_instance<S: AsRef<str>>(
        &self,
        sentences: &[S],
        spec: &QuerySpec,
        hierarchy: &DiagnosisHierarchy,
    ) -> Result<RelevanceRanking<T>, ModelError> {
        if sentences.is_empty() {
            return Err(ModelError::NoSentences);
        }
        let e = self.embed_query(spec, hierarchy)?;
        let cap = self.params.config.max_sentences_per_instance;
        let skip = sentences.len().saturating_sub(cap);
        if skip > 0 {
            tracing::warn!(dropped = skip, kept = cap, "instance exceeds sentence cap; keeping most recent");
        }
        let tokens: Vec<Vec<u32>> = sentences[skip..]
            .iter()
            .map(|s| self.sentence_tokens(s.as_ref()))
            .collect();
        let s = self.params.sentence_matrix(&tokens)?;
        let trace = pointer_forward(&s, &e, &self.params.store, &self.params.head);
        let mut scores = vec![T::zero(); skip];
        scores.extend(trace.attention);
        Ok(RelevanceRanking::from_scores(scores, Some(trace.probability), skip))
    }
}
