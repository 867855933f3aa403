use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "distsum", version, about = "Query-focused sentence ranking trained from future diagnosis codes")]
pub struct Cli {
    /// JSON settings file with one section per subcommand; explicit flags
    /// take precedence over it.
    #[arg(long, global = true, env = "DISTSUM_SETTINGS")]
    pub settings: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with planted evidence and its oracle.
    SynthData(SynthArgs),
    /// Extract training instances and split them by patient.
    BuildInstances(InstancesArgs),
    /// Train a ranking model, writing a checkpoint per epoch and a loss log.
    Train(TrainArgs),
    /// Score ranked results against references and write metrics.
    Evaluate(EvaluateArgs),
    /// Rank one patient's history for one query and print it.
    Rank(RankArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Generator config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    /// ICD-9 → ICD-10 equivalence table.
    #[arg(long)]
    pub gem: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the config's patient count.
    #[arg(long)]
    pub patients: Option<usize>,
    /// Overrides the config's evidence planting rate.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Overrides the config's paraphrase fraction.
    #[arg(long)]
    pub paraphrase_fraction: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct InstancesArgs {
    /// Directory holding reports.jsonl and codes.jsonl.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub gem: Option<PathBuf>,
    /// Days before a persistent code that define time-points.
    #[arg(long, default_value_t = 365)]
    pub window: i64,
    /// Positives must recur within this many days after t.
    #[arg(long)]
    pub horizon: Option<i64>,
    /// Train, validation and test patient fractions.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub splits: String,
    /// Maximum instances per split.
    #[arg(long, default_value = "10000,1000,1000")]
    pub caps: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of malformed corpus lines tolerated.
    #[arg(long, default_value_t = 0.01)]
    pub max_malformed: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training instances (JSONL).
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub gem: Option<PathBuf>,
    #[arg(long, default_value = "description", value_parser = ["indicator", "description", "hierarchy", "hierarchy_path"])]
    pub query_mode: String,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Negative downsampling rate.
    #[arg(long, default_value_t = 0.01)]
    pub downsample_p: f64,
    /// Keep every negative and fix the batch weight at 1.
    #[arg(long, default_value_t = false)]
    pub no_rebalance: bool,
    /// Gradient-norm clip; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    /// Probability clamp before the log; 0 disables.
    #[arg(long, default_value_t = 1e-7)]
    pub clamp: f64,
    #[arg(long, default_value_t = 128)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub n_layers: usize,
    #[arg(long, default_value_t = 4)]
    pub n_heads: usize,
    #[arg(long, default_value_t = 512)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 64)]
    pub d_hidden: usize,
    #[arg(long, default_value_t = 64)]
    pub max_tokens: usize,
    #[arg(long, default_value_t = 256)]
    pub max_sentences: usize,
    #[arg(long, default_value_t = 30_000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Previously written ranked results (JSONL) to score as-is.
    #[arg(long, conflicts_with = "checkpoint")]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// `contextual` uses the checkpoint's encoder without its head.
    #[arg(long, default_value = "attention", value_parser = ["attention", "tfidf", "contextual"])]
    pub scorer: String,
    /// Instances to rank (JSONL).
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Instances whose sentences fit the TF-IDF model; defaults to --instances.
    #[arg(long)]
    pub fit_instances: Option<PathBuf>,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub gem: Option<PathBuf>,
    #[arg(long, default_value = "oracle", value_parser = ["oracle", "annotations"])]
    pub references: String,
    /// Oracle or annotation file.
    #[arg(long)]
    pub references_path: PathBuf,
    /// all, tfidf_zero, custom or depth=N.
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long, default_value = "percentile", value_parser = ["percentile", "attention"])]
    pub threshold_source: String,
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct RankArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub hierarchy: PathBuf,
    #[arg(long)]
    pub gem: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Rank with a baseline; `contextual` needs --checkpoint for its encoder.
    #[arg(long, value_parser = ["tfidf", "contextual"])]
    pub baseline: Option<String>,
    #[arg(long)]
    pub patient: String,
    #[arg(long, allow_negative_numbers = true)]
    pub time_point: i64,
    /// A category id, or free text when no category has this id.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 20)]
    pub top_k: usize,
    /// Also write the ranking and a manifest to this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long, env = "DISTSUM_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, env = "DISTSUM_HIERARCHY")]
    pub hierarchy: PathBuf,
    #[arg(long, env = "DISTSUM_GEM")]
    pub gem: Option<PathBuf>,
    /// `selector=path` or a bare path (selector from the checkpoint's
    /// query mode); repeatable.
    #[arg(long, env = "DISTSUM_CHECKPOINT", value_delimiter = ',')]
    pub checkpoint: Vec<String>,
    /// Annotation log; annotations are kept in memory when absent.
    #[arg(long, env = "DISTSUM_ANNOTATIONS_PATH")]
    pub annotations_path: Option<PathBuf>,
    #[arg(long, env = "DISTSUM_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "DISTSUM_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Built console assets served at /.
    #[arg(long, env = "DISTSUM_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}
