//! Human annotation records, validated precision and annotator agreement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ResultKey;
use crate::corpus::Day;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationRound {
    Reference,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnnotationQuery {
    Category { category_id: String },
    Custom { name: String, description: String },
}

impl AnnotationQuery {
    /// Identifier used to match results: the category id or custom name.
    pub fn id(&self) -> &str {
        match self {
            AnnotationQuery::Category { category_id } => category_id,
            AnnotationQuery::Custom { name, .. } => name,
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, AnnotationQuery::Custom { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub annotator_id: String,
    pub patient_id: String,
    pub time_point: Day,
    pub query: AnnotationQuery,
    pub fingerprint: String,
    pub report_id: String,
    pub relevant: bool,
    pub round: AnnotationRound,
    /// Unix seconds; assigned by the store when absent.
    #[serde(default)]
    pub created_at: Option<i64>,
}

impl AnnotationRecord {
    pub fn result_key(&self) -> ResultKey {
        ResultKey {
            patient_id: self.patient_id.clone(),
            time_point: self.time_point,
            query_id: self.query.id().to_string(),
        }
    }

    /// Fields that identify a mark; re-posting the same identity updates
    /// `relevant`.
    pub fn identity(&self) -> (String, String, Day, AnnotationQuery, String, AnnotationRound) {
        (
            self.annotator_id.clone(),
            self.patient_id.clone(),
            self.time_point,
            self.query.clone(),
            self.fingerprint.clone(),
            self.round,
        )
    }
}

/// Relevant marks over all reviewed sentences of validation-round records.
/// Zero when nothing was reviewed.
pub fn validated_precision(records: &[AnnotationRecord]) -> f64 {
    let reviewed: Vec<&AnnotationRecord> = records
        .iter()
        .filter(|r| r.round == AnnotationRound::Validation)
        .collect();
    if reviewed.is_empty() {
        return 0.0;
    }
    reviewed.iter().filter(|r| r.relevant).count() as f64 / reviewed.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementRow {
    /// `None` where overlap is not meaningful (custom queries).
    pub overlapping: Option<usize>,
    pub annotator_1: usize,
    pub annotator_2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub queries_excluding_custom: AgreementRow,
    pub custom_queries: AgreementRow,
    pub sentences_on_overlapping_queries: AgreementRow,
}

/// Agreement between two annotators' reference-round relevant marks.
/// A query counts as annotated when at least one sentence was marked for it.
pub fn annotator_agreement(a: &[AnnotationRecord], b: &[AnnotationRecord]) -> AgreementTable {
    type Query = (String, Day, AnnotationQuery);
    let marks = |recs: &[AnnotationRecord]| -> BTreeSet<(Query, String)> {
        recs.iter()
            .filter(|r| r.round == AnnotationRound::Reference && r.relevant)
            .map(|r| ((r.patient_id.clone(), r.time_point, r.query.clone()), r.fingerprint.clone()))
            .collect()
    };
    let (ma, mb) = (marks(a), marks(b));
    let queries = |m: &BTreeSet<(Query, String)>, custom: bool| -> BTreeSet<Query> {
        m.iter()
            .filter(|(q, _)| q.2.is_custom() == custom)
            .map(|(q, _)| q.clone())
            .collect()
    };
    let (qa, qb) = (queries(&ma, false), queries(&mb, false));
    let shared: BTreeSet<&Query> = qa.intersection(&qb).collect();
    let on_shared = |m: &BTreeSet<(Query, String)>| -> BTreeSet<(Query, String)> {
        m.iter().filter(|(q, _)| shared.contains(q)).cloned().collect()
    };
    let (sa, sb) = (on_shared(&ma), on_shared(&mb));
    AgreementTable {
        queries_excluding_custom: AgreementRow {
            overlapping: Some(shared.len()),
            annotator_1: qa.difference(&qb).count(),
            annotator_2: qb.difference(&qa).count(),
        },
        custom_queries: AgreementRow {
            overlapping: None,
            annotator_1: queries(&ma, true).len(),
            annotator_2: queries(&mb, true).len(),
        },
        sentences_on_overlapping_queries: AgreementRow {
            overlapping: Some(sa.intersection(&sb).count()),
            annotator_1: sa.difference(&sb).count(),
            annotator_2: sb.difference(&sa).count(),
        },
    }
}
