//! Retrieval and code-prediction metrics: percentile ranks, pooled ROC/PR,
//! NDCG, top-k precision/recall, validated precision, subset filters and
//! annotator agreement.

pub mod annotations;
pub mod curves;
pub mod ranking;
pub mod report;
pub mod subset;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Day, EvidenceOracle};
use crate::lexical::fingerprint;

pub use annotations::{
    annotator_agreement, validated_precision, AgreementRow, AgreementTable, AnnotationQuery, AnnotationRecord,
    AnnotationRound,
};
pub use curves::{binary_curves, code_prediction_metrics, retrieval_curves, CurvePoint, Curves, ThresholdSource};
pub use ranking::{mean_ndcg, ndcg, topk_prf, Prf};
pub use report::{write_curve_points, MetricsReport};
pub use subset::{subset_filter, Subset, SubsetContext};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no reference for {0}")]
    MissingReference(String),
    #[error("reference sentence {fingerprint:?} not found in {key}")]
    UnknownFingerprint { key: String, fingerprint: String },
    #[error("scores and sentences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid subset {0:?}")]
    BadSubset(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identifies one (instance, query) pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResultKey {
    pub patient_id: String,
    pub time_point: Day,
    /// Category id, or the custom query name.
    pub query_id: String,
}

impl std::fmt::Display for ResultKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.patient_id, self.time_point, self.query_id)
    }
}

/// Fraction of unique sentences scoring strictly higher, per input
/// sentence. Duplicates (same fingerprint) share the highest score among
/// them.
pub fn percentiles<S: AsRef<str>>(sentences: &[S], scores: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if sentences.len() != scores.len() {
        return Err(MetricsError::LengthMismatch(sentences.len(), scores.len()));
    }
    let fps: Vec<String> = sentences.iter().map(|s| fingerprint(s.as_ref())).collect();
    let mut best: HashMap<&str, f64> = HashMap::new();
    for (fp, &s) in fps.iter().zip(scores) {
        best.entry(fp).and_modify(|b| *b = b.max(s)).or_insert(s);
    }
    let mut uniq: Vec<f64> = best.values().copied().collect();
    uniq.sort_by(|a, b| b.total_cmp(a));
    let n = uniq.len() as f64;
    Ok(fps
        .iter()
        .map(|fp| {
            let s = best[fp.as_str()];
            uniq.partition_point(|&u| u > s) as f64 / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub fingerprint: String,
    pub score: f64,
    pub percentile: f64,
}

/// Model output for one (instance, query): unique sentences ordered by
/// score descending, ties by first position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub key: ResultKey,
    /// Description (category queries) or free text (custom queries).
    pub query_text: String,
    pub depth: Option<usize>,
    pub custom: bool,
    pub sentences: Vec<ScoredSentence>,
}

impl RankedResult {
    pub fn from_scores<S: AsRef<str>>(
        key: ResultKey,
        query_text: String,
        depth: Option<usize>,
        custom: bool,
        sentences: &[S],
        scores: &[f64],
    ) -> Result<Self, MetricsError> {
        let pct = percentiles(sentences, scores)?;
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut out: Vec<(usize, ScoredSentence)> = Vec::new();
        for (i, s) in sentences.iter().enumerate() {
            let fp = fingerprint(s.as_ref());
            match seen.get(&fp) {
                Some(&j) => {
                    if scores[i] > out[j].1.score {
                        out[j].1.score = scores[i];
                    }
                }
                None => {
                    seen.insert(fp.clone(), out.len());
                    out.push((
                        i,
                        ScoredSentence {
                            fingerprint: fp,
                            score: scores[i],
                            percentile: pct[i],
                        },
                    ));
                }
            }
        }
        out.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
        Ok(RankedResult {
            key,
            query_text,
            depth,
            custom,
            sentences: out.into_iter().map(|p| p.1).collect(),
        })
    }

    pub fn fingerprints(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.fingerprint.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Oracle,
    Annotation,
}

/// Relevant-sentence fingerprints per (instance, query).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub source: ReferenceSource,
    pub entries: BTreeMap<ResultKey, BTreeSet<String>>,
}

impl ReferenceSummary {
    pub fn new(source: ReferenceSource) -> Self {
        ReferenceSummary {
            source,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: ResultKey, sentence: &str) {
        self.entries.entry(key).or_default().insert(fingerprint(sentence));
    }

    pub fn get(&self, key: &ResultKey) -> Option<&BTreeSet<String>> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_oracle(oracle: &EvidenceOracle) -> Self {
        let mut r = ReferenceSummary::new(ReferenceSource::Oracle);
        for e in oracle.entries() {
            r.insert(
                ResultKey {
                    patient_id: e.patient_id.clone(),
                    time_point: e.time_point,
                    query_id: e.category_id.clone(),
                },
                &e.sentence,
            );
        }
        r
    }

    /// Relevant sentences of reference-round annotations.
    pub fn from_annotations(records: &[AnnotationRecord]) -> Self {
        let mut r = ReferenceSummary::new(ReferenceSource::Annotation);
        for rec in records {
            if rec.round == AnnotationRound::Reference && rec.relevant {
                r.insert(rec.result_key(), &rec.fingerprint);
            }
        }
        r
    }

    /// Checks that every result has a reference and every reference
    /// sentence occurs in its result.
    pub fn check(&self, results: &[RankedResult]) -> Result<(), MetricsError> {
        for r in results {
            let refs = self
                .get(&r.key)
                .ok_or_else(|| MetricsError::MissingReference(r.key.to_string()))?;
            let present: BTreeSet<&str> = r.fingerprints().collect();
            if let Some(fp) = refs.iter().find(|f| !present.contains(f.as_str())) {
                return Err(MetricsError::UnknownFingerprint {
                    key: r.key.to_string(),
                    fingerprint: fp.clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn write_results(path: &Path, results: &[RankedResult]) -> Result<(), MetricsError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in results {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<RankedResult>, MetricsError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
