//! Synthetic corpus generator.
//!
//! Each patient gets a run of reports (at least one radiology report that
//! is not the earliest) and a few "chosen" leaf categories. For each chosen
//! category an index radiology report is picked, the category's code is
//! emitted at least twice after it, and with probability `rho` an evidence
//! sentence for the category is planted in an earlier report. Every planted
//! sentence is recorded in the [`EvidenceOracle`] under each radiology
//! time-point that would produce a training instance containing it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CodeEvent, Corpus, CorpusError, Day, PatientRecord, Report, ReportKind, Result};
use crate::hierarchy::{CodeSystem, DiagnosisHierarchy};
use crate::lexical::fingerprint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCategory {
    /// Leaf category id in the hierarchy.
    pub id: String,
    /// Code emitted for the category; must map to `id`.
    pub code: String,
    #[serde(default = "default_system")]
    pub system: CodeSystem,
    /// Relative frequency with which patients develop the condition.
    #[serde(default = "one")]
    pub weight: f64,
    /// Evidence sentences sharing content words with the description.
    pub overlapping: Vec<String>,
    /// Evidence sentences with no content words from the description.
    pub paraphrased: Vec<String>,
}

fn default_system() -> CodeSystem {
    CodeSystem::Icd9
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patients: usize,
    /// Inclusive range.
    pub reports_per_patient: (usize, usize),
    /// Inclusive range of distractor sentences per report.
    pub sentences_per_report: (usize, usize),
    /// Inclusive range of chosen categories per patient.
    pub categories_per_patient: (usize, usize),
    pub categories: Vec<SynthCategory>,
    pub distractors: Vec<String>,
    /// Slot fillers: `{side}` in a template is replaced by a random entry
    /// of `fillers["side"]`.
    #[serde(default)]
    pub fillers: BTreeMap<String, Vec<String>>,
    /// Probability that a chosen category gets planted evidence.
    pub rho: f64,
    /// Probability that planted evidence is drawn from the paraphrased pool.
    pub paraphrase_fraction: f64,
    /// Probability per patient of one stray, non-persistent code.
    #[serde(default)]
    pub noise_code_rate: f64,
    #[serde(default = "default_window")]
    pub window_days: Day,
    /// Inclusive range of days between consecutive reports.
    #[serde(default = "default_gap")]
    pub report_gap_days: (Day, Day),
}

fn default_window() -> Day {
    365
}

fn default_gap() -> (Day, Day) {
    (15, 90)
}

impl SynthConfig {
    pub fn validate(&self, hierarchy: &DiagnosisHierarchy) -> Result<()> {
        let bad = |m: String| Err(CorpusError::Config(m));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1]", self.rho));
        }
        if !(0.0..=1.0).contains(&self.paraphrase_fraction) {
            return bad(format!(
                "paraphrase_fraction {} outside [0, 1]",
                self.paraphrase_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.noise_code_rate) {
            return bad("noise_code_rate outside [0, 1]".into());
        }
        if self.categories.is_empty() {
            return bad("no categories".into());
        }
        if self.distractors.is_empty() {
            return bad("empty distractor pool".into());
        }
        if self.reports_per_patient.0 < 2 || self.reports_per_patient.0 > self.reports_per_patient.1 {
            return bad("reports_per_patient must be an increasing range starting at 2 or more".into());
        }
        if self.sentences_per_report.0 > self.sentences_per_report.1 {
            return bad("sentences_per_report range is reversed".into());
        }
        if self.categories_per_patient.0 > self.categories_per_patient.1
            || self.categories_per_patient.1 > self.categories.len()
        {
            return bad("categories_per_patient range invalid".into());
        }
        if self.report_gap_days.0 < 1 || self.report_gap_days.0 > self.report_gap_days.1 {
            return bad("report_gap_days invalid".into());
        }
        for c in &self.categories {
            if c.overlapping.is_empty() || c.paraphrased.is_empty() {
                return bad(format!("category {} has an empty template pool", c.id));
            }
            if !(c.weight > 0.0) {
                return bad(format!("category {} needs a positive weight", c.id));
            }
            match hierarchy.map_code_id(&c.code, c.system) {
                Some(id) if id == c.id => {}
                other => {
                    return bad(format!(
                        "code {} of category {} maps to {:?}",
                        c.code, c.id, other
                    ))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OracleEntry {
    pub patient_id: String,
    pub time_point: Day,
    pub category_id: String,
    pub sentence: String,
    pub paraphrased: bool,
}

/// Planted evidence keyed by (patient, time-point, category).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceOracle {
    entries: BTreeSet<OracleEntry>,
}

impl EvidenceOracle {
    pub fn from_entries<I: IntoIterator<Item = OracleEntry>>(entries: I) -> Self {
        EvidenceOracle {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &OracleEntry> {
        self.entries.iter()
    }

    /// Evidence fingerprints grouped by (patient, time-point, category).
    pub fn grouped(&self) -> BTreeMap<(String, Day, String), BTreeSet<String>> {
        let mut out: BTreeMap<_, BTreeSet<String>> = BTreeMap::new();
        for e in &self.entries {
            out.entry((e.patient_id.clone(), e.time_point, e.category_id.clone()))
                .or_default()
                .insert(fingerprint(&e.sentence));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for e in &self.entries {
            writeln!(w, "{}", serde_json::to_string(e).expect("oracle entry")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let io = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut entries = BTreeSet::new();
        for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let e: OracleEntry = serde_json::from_str(&line).map_err(|e| CorpusError::Io {
                path: format!("{}:{}", path.display(), i + 1),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            entries.insert(e);
        }
        Ok(EvidenceOracle { entries })
    }
}

fn fill<R: Rng>(template: &str, fillers: &BTreeMap<String, Vec<String>>, rng: &mut R) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let Some(close) = rest[open..].find('}') else {
            break;
        };
        out.push_str(&rest[..open]);
        let slot = &rest[open + 1..open + close];
        match fillers.get(slot).filter(|v| !v.is_empty()) {
            Some(options) => out.push_str(options.choose(rng).expect("non-empty")),
            None => out.push_str(&rest[open..=open + close]),
        }
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    out
}

/// Generates a corpus and its evidence oracle. Identical inputs give
/// identical outputs.
pub fn generate_synthetic(
    config: &SynthConfig,
    hierarchy: &DiagnosisHierarchy,
    seed: u64,
) -> Result<(Corpus, EvidenceOracle)> {
    config.validate(hierarchy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = WeightedIndex::new(config.categories.iter().map(|c| c.weight))
        .map_err(|e| CorpusError::Config(e.to_string()))?;
    let width = config.patients.max(1).to_string().len().max(4);

    let mut records = Vec::with_capacity(config.patients);
    let mut oracle = BTreeSet::new();

    for p in 0..config.patients {
        let pid = format!("p{:0width$}", p, width = width);
        let n_reports = rng.random_range(config.reports_per_patient.0..=config.reports_per_patient.1);

        let mut day: Day = rng.random_range(0..3650);
        let mut kinds: Vec<ReportKind> = Vec::with_capacity(n_reports);
        let mut days: Vec<Day> = Vec::with_capacity(n_reports);
        for _ in 0..n_reports {
            kinds.push(*ReportKind::ALL.choose(&mut rng).expect("kinds"));
            days.push(day);
            day += rng.random_range(config.report_gap_days.0..=config.report_gap_days.1);
        }
        if !kinds[1..].contains(&ReportKind::Radiology) {
            let i = rng.random_range(1..n_reports);
            kinds[i] = ReportKind::Radiology;
        }

        let mut bodies: Vec<Vec<String>> = (0..n_reports)
            .map(|_| {
                let n = rng.random_range(config.sentences_per_report.0..=config.sentences_per_report.1);
                (0..n)
                    .map(|_| {
                        let t = config.distractors.choose(&mut rng).expect("distractors");
                        fill(t, &config.fillers, &mut rng)
                    })
                    .collect()
            })
            .collect();

        let k = rng.random_range(config.categories_per_patient.0..=config.categories_per_patient.1);
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        while chosen.len() < k {
            let c = weights.sample(&mut rng);
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }

        let radiology_idx: Vec<usize> = (1..n_reports)
            .filter(|&i| kinds[i] == ReportKind::Radiology)
            .collect();
        let mut codes: Vec<CodeEvent> = Vec::new();
        let mut planted: Vec<(usize, String, bool, Day, usize)> = Vec::new();

        for &ci in &chosen {
            let cat = &config.categories[ci];
            let index = *radiology_idx.choose(&mut rng).expect("radiology report");
            let t_index = days[index];
            let first = t_index + rng.random_range(1..=120);
            let repeats = rng.random_range(1..=3);
            let mut ts = vec![first];
            for _ in 0..repeats {
                let last = *ts.last().expect("non-empty");
                ts.push(last + rng.random_range(1..=200));
            }
            for t in ts {
                codes.push(CodeEvent {
                    patient_id: pid.clone(),
                    code: cat.code.clone(),
                    system: cat.system,
                    timestamp: t,
                });
            }

            if rng.random::<f64>() < config.rho {
                let paraphrased = rng.random::<f64>() < config.paraphrase_fraction;
                let pool = if paraphrased { &cat.paraphrased } else { &cat.overlapping };
                let sentence = fill(pool.choose(&mut rng).expect("pool"), &config.fillers, &mut rng);
                // Evidence goes into one of the reports strictly before the
                // index report.
                let earlier: Vec<usize> = (0..index).filter(|&i| days[i] < t_index).collect();
                let host = *earlier.choose(&mut rng).expect("an earlier report");
                let at = rng.random_range(0..=bodies[host].len());
                bodies[host].insert(at, sentence.clone());
                planted.push((ci, sentence, paraphrased, first, host));
            }
        }

        if rng.random::<f64>() < config.noise_code_rate {
            let unchosen: Vec<usize> = (0..config.categories.len())
                .filter(|c| !chosen.contains(c))
                .collect();
            if let Some(&ci) = unchosen.choose(&mut rng) {
                let cat = &config.categories[ci];
                codes.push(CodeEvent {
                    patient_id: pid.clone(),
                    code: cat.code.clone(),
                    system: cat.system,
                    timestamp: days[0] + rng.random_range(0..=(day - days[0]).max(1)),
                });
            }
        }

        for (ci, sentence, paraphrased, first, host) in planted {
            let cat = &config.categories[ci];
            for (i, &t) in days.iter().enumerate() {
                let in_window = t >= first - config.window_days && t < first;
                if kinds[i] == ReportKind::Radiology && in_window && days[host] < t {
                    oracle.insert(OracleEntry {
                        patient_id: pid.clone(),
                        time_point: t,
                        category_id: cat.id.clone(),
                        sentence: sentence.clone(),
                        paraphrased,
                    });
                }
            }
        }

        let mut record = PatientRecord::new(pid.clone());
        for (i, body) in bodies.into_iter().enumerate() {
            record.reports.push(Report {
                id: format!("{pid}-r{i:02}"),
                patient_id: pid.clone(),
                kind: kinds[i],
                timestamp: days[i],
                text: body.join(" "),
            });
        }
        record.code_events = codes;
        records.push(record);
    }

    Ok((
        Corpus::from_records(records),
        EvidenceOracle { entries: oracle },
    ))
}
