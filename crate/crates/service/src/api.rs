//! Request and response bodies.

use std::fmt;
use std::str::FromStr;

use distsum_core::corpus::{Day, ReportKind};
use distsum_core::metrics::AnnotationRound;
use distsum_core::QueryMode;
use serde::{Deserialize, Serialize};

/// Which scorer answers a ranking request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelector {
    Tfidf,
    Contextual,
    Indicator,
    Description,
    #[serde(alias = "hierarchy_path")]
    Hierarchy,
}

impl ModelSelector {
    pub const ALL: [ModelSelector; 5] = [
        ModelSelector::Tfidf,
        ModelSelector::Contextual,
        ModelSelector::Indicator,
        ModelSelector::Description,
        ModelSelector::Hierarchy,
    ];

    /// Query mode of the attention model behind this selector.
    pub fn query_mode(self) -> Option<QueryMode> {
        match self {
            ModelSelector::Indicator => Some(QueryMode::Indicator),
            ModelSelector::Description => Some(QueryMode::Description),
            ModelSelector::Hierarchy => Some(QueryMode::Hierarchy),
            ModelSelector::Tfidf | ModelSelector::Contextual => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelSelector::Tfidf => "tfidf",
            ModelSelector::Contextual => "contextual",
            ModelSelector::Indicator => "indicator",
            ModelSelector::Description => "description",
            ModelSelector::Hierarchy => "hierarchy",
        }
    }
}

impl fmt::Display for ModelSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hierarchy_path" => Ok(ModelSelector::Hierarchy),
            _ => ModelSelector::ALL
                .into_iter()
                .find(|m| m.as_str() == s)
                .ok_or_else(|| format!("unknown model {s:?}")),
        }
    }
}

/// Exactly one of `category` (hierarchy or custom category id) and
/// `text` (free text).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RankQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

fn default_top_k() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRequest {
    pub patient_id: String,
    pub time_point: Day,
    pub query: RankQuery,
    pub model: ModelSelector,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSentence {
    pub sentence: String,
    pub fingerprint: String,
    pub report_id: String,
    pub report_timestamp: Day,
    /// Position of the sentence within its report.
    pub index: usize,
    pub score: f64,
    pub percentile: f64,
}

/// Unique sentences before the time point, best first. The model selector
/// is deliberately not echoed so blind validation sessions can show the
/// payload as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankResponse {
    pub patient_id: String,
    pub time_point: Day,
    /// Text the query resolved to (description, custom description or free
    /// text).
    pub query_text: String,
    pub sentences: Vec<RankedSentence>,
    /// Probability that the queried code is assigned later; absent for
    /// baselines and free-text queries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// Unique sentences available before truncation to `top_k`.
    pub total_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: String,
    pub name: String,
    pub description: String,
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub depth: usize,
    pub leaf: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomCategory {
    pub id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyResponse {
    /// Hierarchy order: every parent precedes its children.
    pub nodes: Vec<HierarchyNode>,
    pub custom: Vec<CustomCategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewCustomCategory {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSentence {
    pub index: usize,
    pub text: String,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportView {
    pub id: String,
    pub kind: ReportKind,
    pub timestamp: Day,
    pub text: String,
    pub sentences: Vec<ReportSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportsResponse {
    pub patient_id: String,
    pub reports: Vec<ReportView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReportWindow {
    /// Reports strictly before this day.
    pub before: Option<Day>,
    /// Reports strictly after this day.
    pub after: Option<Day>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoundFilter {
    pub round: Option<AnnotationRound>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedId {
    pub id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedCategory {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedPrecision {
    pub validated_precision: f64,
    pub reviewed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelsResponse {
    /// Selectors that can currently answer `/rank`.
    pub available: Vec<ModelSelector>,
}
