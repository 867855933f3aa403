//! Query-focused extractive ranking of clinical note sentences, trained
//! with distant supervision from future diagnosis codes.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod hierarchy;
pub mod lexical;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use corpus::{Corpus, CorpusError, EvidenceOracle, PatientRecord, Report, ReportKind, SynthConfig};
pub use extraction::{build_instances, ExtractionConfig, SplitSpec, TrainingInstance};
pub use hierarchy::{CategoryLabel, CodeSystem, DiagnosisHierarchy, HierarchyError};
pub use lexical::{TfidfModel, Vocabulary};
pub use model::{EncoderConfig, ModelError, ModelParameters, QueryMode, QuerySpec, RankingModel, RelevanceRanking};
pub use scalar::Scalar;
pub use training::{TrainConfig, TrainError};

/// Single-precision model used for training and serving.
pub type ModelF32 = RankingModel<f32>;
/// Double-precision model used for gradient checks.
pub type ModelF64 = RankingModel<f64>;
pub type ParamsF32 = ModelParameters<f32>;
pub type ParamsF64 = ModelParameters<f64>;
pub type RankingF32 = RelevanceRanking<f32>;
