//! Turns a corpus into (sentences, queries, labels) training instances and
//! splits patients into train/validation/test groups.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Day, PatientRecord, ReportKind};
use crate::hierarchy::{CategoryLabel, DiagnosisHierarchy, LeafLabel};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid split spec: {0}")]
    Split(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSentence {
    pub text: String,
    pub report_id: String,
    pub report_timestamp: Day,
}

/// One (patient, time-point) pair. `queries` holds category ids and
/// `labels[i]` is 1 when `queries[i]` occurs after the time-point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub patient_id: String,
    pub t: Day,
    pub sentences: Vec<InstanceSentence>,
    pub queries: Vec<String>,
    pub labels: Vec<u8>,
}

impl TrainingInstance {
    pub fn key(&self) -> (&str, Day) {
        (&self.patient_id, self.t)
    }

    pub fn positives(&self) -> impl Iterator<Item = &str> {
        self.queries
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == 1)
            .map(|(q, _)| q.as_str())
    }

    pub fn negatives(&self) -> impl Iterator<Item = &str> {
        self.queries
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == 0)
            .map(|(q, _)| q.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractionConfig {
    /// Radiology reports at most this many days before a persistent code's
    /// first occurrence define time-points.
    pub window: Day,
    /// Positives must recur within this many days after t; unbounded when
    /// `None`.
    pub label_horizon: Option<Day>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            window: 365,
            label_horizon: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionStats {
    pub patients: usize,
    pub candidate_time_points: usize,
    pub instances: usize,
    pub dropped_no_sentences: usize,
    pub dropped_no_positive: usize,
    pub unmapped_code_events: usize,
}

/// Leaves reached by at least two of the patient's code events, with the
/// sorted timestamps of those events.
pub fn persistent_leaf_codes(
    patient: &PatientRecord,
    hierarchy: &DiagnosisHierarchy,
) -> BTreeMap<usize, Vec<Day>> {
    let mut all = mapped_leaf_codes(patient, hierarchy).0;
    all.retain(|_, ts| ts.len() >= 2);
    all
}

fn mapped_leaf_codes(
    patient: &PatientRecord,
    hierarchy: &DiagnosisHierarchy,
) -> (BTreeMap<usize, Vec<Day>>, usize) {
    let mut by_leaf: BTreeMap<usize, Vec<Day>> = BTreeMap::new();
    let mut unmapped = 0;
    for ev in &patient.code_events {
        match hierarchy.map_code(&ev.code, ev.system) {
            Some(leaf) => by_leaf.entry(leaf).or_default().push(ev.timestamp),
            None => unmapped += 1,
        }
    }
    for ts in by_leaf.values_mut() {
        ts.sort_unstable();
    }
    (by_leaf, unmapped)
}

/// Instances for one patient, ordered by time-point.
pub fn patient_instances(
    patient: &PatientRecord,
    hierarchy: &DiagnosisHierarchy,
    config: &ExtractionConfig,
    stats: &mut ExtractionStats,
) -> Vec<TrainingInstance> {
    let (mapped, unmapped) = mapped_leaf_codes(patient, hierarchy);
    stats.unmapped_code_events += unmapped;
    let persistent: BTreeMap<usize, &Vec<Day>> =
        mapped.iter().filter(|(_, ts)| ts.len() >= 2).map(|(&l, ts)| (l, ts)).collect();

    let mut time_points = BTreeSet::new();
    for ts in persistent.values() {
        let first = ts[0];
        for r in &patient.reports {
            if r.kind == ReportKind::Radiology
                && r.timestamp >= first - config.window
                && r.timestamp < first
            {
                time_points.insert(r.timestamp);
            }
        }
    }
    stats.candidate_time_points += time_points.len();

    // Leaves with no mapped code event at any time are the negatives.
    let negatives: Vec<usize> = hierarchy
        .leaves()
        .filter(|l| !mapped.contains_key(l))
        .collect();

    let mut out = Vec::new();
    for t in time_points {
        let sentences: Vec<InstanceSentence> = patient
            .sentences_before(t)
            .into_iter()
            .map(|s| InstanceSentence {
                text: s.text,
                report_id: s.report_id,
                report_timestamp: s.report_timestamp,
            })
            .collect();
        if sentences.is_empty() {
            stats.dropped_no_sentences += 1;
            continue;
        }
        let mut leaf_labels: HashMap<usize, LeafLabel> = HashMap::new();
        for (&leaf, ts) in &persistent {
            let after = ts.iter().any(|&x| {
                x > t && config.label_horizon.is_none_or(|h| x <= t + h)
            });
            if after {
                leaf_labels.insert(leaf, LeafLabel::Positive);
            }
        }
        if leaf_labels.is_empty() {
            stats.dropped_no_positive += 1;
            continue;
        }
        for &l in &negatives {
            leaf_labels.insert(l, LeafLabel::Negative);
        }
        let labels = hierarchy
            .propagate_indices(&leaf_labels)
            .expect("labels only on leaves");
        let mut queries = Vec::new();
        let mut ys = Vec::new();
        for (i, lab) in labels.into_iter().enumerate() {
            match lab {
                CategoryLabel::Positive => {
                    queries.push(hierarchy.node(i).id.clone());
                    ys.push(1);
                }
                CategoryLabel::Negative => {
                    queries.push(hierarchy.node(i).id.clone());
                    ys.push(0);
                }
                CategoryLabel::Excluded => {}
            }
        }
        out.push(TrainingInstance {
            patient_id: patient.id.clone(),
            t,
            sentences,
            queries,
            labels: ys,
        });
    }
    stats.instances += out.len();
    out
}

/// Builds instances for every patient, ordered by (patient id, t).
pub fn build_instances(
    corpus: &Corpus,
    hierarchy: &DiagnosisHierarchy,
    config: &ExtractionConfig,
) -> (Vec<TrainingInstance>, ExtractionStats) {
    let mut stats = ExtractionStats::default();
    let mut out = Vec::new();
    for p in corpus.patients() {
        stats.patients += 1;
        out.extend(patient_instances(p, hierarchy, config, &mut stats));
    }
    (out, stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// train / validation / test fractions summing to 1.
    pub ratios: [f64; 3],
    /// Maximum instances kept per split.
    pub caps: [usize; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.7, 0.15, 0.15],
            caps: [10_000, 1_000, 1_000],
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), ExtractionError> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(ExtractionError::Split("ratios must lie in [0, 1]".into()));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ExtractionError::Split(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items; ties in the remainder go
/// to the later split.
pub fn split_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: [usize; 3] = [0; 3];
    for (s, q) in sizes.iter_mut().zip(&quotas) {
        *s = (q + 1e-9).floor() as usize;
    }
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    let rem = |i: usize| quotas[i] - sizes[i] as f64;
    order.sort_by(|&a, &b| {
        rem(b)
            .partial_cmp(&rem(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.cmp(&a))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatientSplit {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// Deterministic patient-level partition.
pub fn split_patients<'a, I>(patients: I, spec: &SplitSpec) -> Result<PatientSplit, ExtractionError>
where
    I: IntoIterator<Item = &'a str>,
{
    spec.validate()?;
    let mut ids: Vec<&str> = patients.into_iter().collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let [a, b, _] = split_sizes(ids.len(), &spec.ratios);
    let mut split = PatientSplit::default();
    for (i, id) in ids.into_iter().enumerate() {
        let set = if i < a {
            &mut split.train
        } else if i < a + b {
            &mut split.validation
        } else {
            &mut split.test
        };
        set.insert(id.to_string());
    }
    Ok(split)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstanceSplits {
    pub train: Vec<TrainingInstance>,
    pub validation: Vec<TrainingInstance>,
    pub test: Vec<TrainingInstance>,
}

/// Assigns instances by patient, then truncates each split uniformly at
/// random to its cap while keeping (patient, t) order.
pub fn split_instances(
    instances: Vec<TrainingInstance>,
    split: &PatientSplit,
    spec: &SplitSpec,
) -> InstanceSplits {
    let mut out = InstanceSplits::default();
    for inst in instances {
        if split.train.contains(&inst.patient_id) {
            out.train.push(inst);
        } else if split.validation.contains(&inst.patient_id) {
            out.validation.push(inst);
        } else if split.test.contains(&inst.patient_id) {
            out.test.push(inst);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_cafe);
    for (list, &cap) in [&mut out.train, &mut out.validation, &mut out.test]
        .into_iter()
        .zip(&spec.caps)
    {
        truncate_uniform(list, cap, &mut rng);
    }
    out
}

fn truncate_uniform<R: Rng>(list: &mut Vec<TrainingInstance>, cap: usize, rng: &mut R) {
    if list.len() <= cap {
        return;
    }
    let mut keep = rand::seq::index::sample(rng, list.len(), cap).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    let mut i = 0;
    list.retain(|_| {
        let k = keep.peek() == Some(&i);
        if k {
            keep.next();
        }
        i += 1;
        k
    });
}

pub fn write_instances(path: &Path, instances: &[TrainingInstance]) -> Result<(), ExtractionError> {
    let io = |source| ExtractionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for inst in instances {
        writeln!(w, "{}", serde_json::to_string(inst).expect("instance")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_instances(path: &Path) -> Result<Vec<TrainingInstance>, ExtractionError> {
    let io = |source| ExtractionError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TrainingInstance =
            serde_json::from_str(&line).map_err(|e| ExtractionError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        if inst.queries.len() != inst.labels.len() {
            return Err(ExtractionError::Parse {
                line: i + 1,
                message: "queries and labels differ in length".into(),
            });
        }
        out.push(inst);
    }
    Ok(out)
}
