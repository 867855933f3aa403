//! Patient records: reports and code events, ingestion from line-delimited
//! files, and the synthetic generator with its evidence oracle.

mod synth;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::hierarchy::CodeSystem;
use crate::lexical::split_sentences;

pub use synth::{
    generate_synthetic, EvidenceOracle, OracleEntry, SynthCategory, SynthConfig,
};

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const CODES_FILE: &str = "codes.jsonl";
pub const ORACLE_FILE: &str = "oracle.jsonl";

/// Days since epoch.
pub type Day = i64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{malformed} of {total} lines malformed in {file} (limit {limit:.2}%)")]
    TooManyMalformed {
        file: String,
        malformed: usize,
        total: usize,
        limit: f64,
    },
    #[error("unknown patient {0:?}")]
    UnknownPatient(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    DischargeSummary,
    Operative,
    Pathology,
    Progress,
    Radiology,
    Visit,
}

impl ReportKind {
    pub const ALL: [ReportKind; 6] = [
        ReportKind::DischargeSummary,
        ReportKind::Operative,
        ReportKind::Pathology,
        ReportKind::Progress,
        ReportKind::Radiology,
        ReportKind::Visit,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub patient_id: String,
    pub kind: ReportKind,
    pub timestamp: Day,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeEvent {
    pub patient_id: String,
    pub code: String,
    pub system: CodeSystem,
    pub timestamp: Day,
}

/// Reports sorted by (timestamp, id); code events sorted by timestamp with
/// file order kept among ties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatientRecord {
    pub id: String,
    pub reports: Vec<Report>,
    pub code_events: Vec<CodeEvent>,
}

impl PatientRecord {
    pub fn new(id: impl Into<String>) -> Self {
        PatientRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn sort(&mut self) {
        self.reports
            .sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        self.code_events.sort_by_key(|c| c.timestamp);
    }

    /// Sentences of every report dated strictly before `t`, in temporal
    /// order.
    pub fn sentences_before(&self, t: Day) -> Vec<SentenceRef> {
        let mut out = Vec::new();
        for r in self.reports.iter().take_while(|r| r.timestamp < t) {
            for (index, text) in split_sentences(&r.text).into_iter().enumerate() {
                out.push(SentenceRef {
                    text,
                    report_id: r.id.clone(),
                    report_timestamp: r.timestamp,
                    index,
                });
            }
        }
        out
    }

    pub fn reports_between(&self, after: Option<Day>, before: Option<Day>) -> Vec<&Report> {
        self.reports
            .iter()
            .filter(|r| after.is_none_or(|a| r.timestamp > a))
            .filter(|r| before.is_none_or(|b| r.timestamp < b))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRef {
    pub text: String,
    pub report_id: String,
    pub report_timestamp: Day,
    /// Position within its report.
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    patients: BTreeMap<String, PatientRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Fraction of malformed lines tolerated per file before aborting.
    pub max_malformed_fraction: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            max_malformed_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub report_lines: usize,
    pub code_lines: usize,
    pub malformed_reports: usize,
    pub malformed_codes: usize,
}

impl Corpus {
    pub fn from_records<I: IntoIterator<Item = PatientRecord>>(records: I) -> Self {
        let mut patients = BTreeMap::new();
        for mut r in records {
            r.sort();
            patients.insert(r.id.clone(), r);
        }
        Corpus { patients }
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn patient(&self, id: &str) -> Option<&PatientRecord> {
        self.patients.get(id)
    }

    pub fn patients(&self) -> impl Iterator<Item = &PatientRecord> {
        self.patients.values()
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.patients.keys().map(String::as_str)
    }

    pub fn sentences_before(&self, patient: &str, t: Day) -> Result<Vec<SentenceRef>> {
        self.patient(patient)
            .map(|p| p.sentences_before(t))
            .ok_or_else(|| CorpusError::UnknownPatient(patient.to_string()))
    }

    /// Keeps the patients for which `keep` holds, e.g. a cohort filter.
    pub fn filter<F: Fn(&PatientRecord) -> bool>(&self, keep: F) -> Corpus {
        Corpus {
            patients: self
                .patients
                .iter()
                .filter(|(_, p)| keep(p))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Reads `reports.jsonl` and `codes.jsonl` from `dir`.
    pub fn ingest(dir: &Path, options: IngestOptions) -> Result<(Corpus, IngestReport)> {
        let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();
        let mut report = IngestReport::default();

        let (reports, total, bad) = read_jsonl::<Report>(&dir.join(REPORTS_FILE), options)?;
        report.report_lines = total;
        report.malformed_reports = bad;
        for r in reports {
            patients
                .entry(r.patient_id.clone())
                .or_insert_with(|| PatientRecord::new(r.patient_id.clone()))
                .reports
                .push(r);
        }

        let (codes, total, bad) = read_jsonl::<CodeEvent>(&dir.join(CODES_FILE), options)?;
        report.code_lines = total;
        report.malformed_codes = bad;
        for c in codes {
            patients
                .entry(c.patient_id.clone())
                .or_insert_with(|| PatientRecord::new(c.patient_id.clone()))
                .code_events
                .push(c);
        }
        for p in patients.values_mut() {
            p.sort();
        }
        Ok((Corpus { patients }, report))
    }

    /// Writes the two corpus files into `dir`, patients in id order.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let io = |source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let mut rw = BufWriter::new(File::create(dir.join(REPORTS_FILE)).map_err(io)?);
        let mut cw = BufWriter::new(File::create(dir.join(CODES_FILE)).map_err(io)?);
        for p in self.patients.values() {
            for r in &p.reports {
                writeln!(rw, "{}", serde_json::to_string(r).expect("report")).map_err(io)?;
            }
            for c in &p.code_events {
                writeln!(cw, "{}", serde_json::to_string(c).expect("code event")).map_err(io)?;
            }
        }
        rw.flush().map_err(io)?;
        cw.flush().map_err(io)?;
        Ok(())
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
    options: IngestOptions,
) -> Result<(Vec<T>, usize, usize)> {
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    let (mut total, mut bad) = (0usize, 0usize);
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<T>(&line) {
            Ok(v) => out.push(v),
            Err(e) => {
                bad += 1;
                warn!(file = %path.display(), line = total, error = %e, "skipping malformed line");
            }
        }
    }
    if total > 0 && bad as f64 > options.max_malformed_fraction * total as f64 {
        return Err(CorpusError::TooManyMalformed {
            file: path.display().to_string(),
            malformed: bad,
            total,
            limit: options.max_malformed_fraction * 100.0,
        });
    }
    Ok((out, total, bad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(id: &str, pid: &str, t: Day, text: &str) -> Report {
        Report {
            id: id.into(),
            patient_id: pid.into(),
            kind: ReportKind::Progress,
            timestamp: t,
            text: text.into(),
        }
    }

    #[test]
    fn sentences_before_respects_time_and_ties() {
        let mut p = PatientRecord::new("p");
        p.reports.push(report("r2", "p", 10, "Late one."));
        p.reports.push(report("r1", "p", 5, "Early one. Early two."));
        p.reports.push(report("r0", "p", 10, "Tie first."));
        p.sort();
        let c = Corpus::from_records([p]);
        assert!(c.sentences_before("p", 5).unwrap().is_empty());
        let s = c.sentences_before("p", 8).unwrap();
        assert_eq!(
            s.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            vec!["Early one.", "Early two."]
        );
        assert_eq!(s[1].index, 1);
        let s = c.sentences_before("p", 11).unwrap();
        let ids: Vec<_> = s.iter().map(|s| s.report_id.as_str()).collect();
        assert_eq!(ids, vec!["r1", "r1", "r0", "r2"]);
        assert!(matches!(
            c.sentences_before("nobody", 1),
            Err(CorpusError::UnknownPatient(_))
        ));
    }

    #[test]
    fn ingest_empty_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(REPORTS_FILE), "").unwrap();
        fs::write(dir.path().join(CODES_FILE), "").unwrap();
        let (c, rep) = Corpus::ingest(dir.path(), IngestOptions::default()).unwrap();
        assert!(c.is_empty());
        assert_eq!(rep.report_lines, 0);

        fs::write(
            dir.path().join(REPORTS_FILE),
            concat!(
                r#"{"id":"b","patient_id":"p","kind":"radiology","timestamp":20,"text":"Two."}"#,
                "\n",
                r#"{"id":"a","patient_id":"p","kind":"visit","timestamp":3,"text":"One."}"#,
                "\n"
            ),
        )
        .unwrap();
        let (c, _) = Corpus::ingest(dir.path(), IngestOptions::default()).unwrap();
        let ts: Vec<_> = c.patient("p").unwrap().reports.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![3, 20]);
    }

    #[test]
    fn malformed_lines_abort_over_limit() {
        let dir = tempfile::tempdir().unwrap();
        let good = r#"{"patient_id":"p","code":"191","system":"ICD9","timestamp":4}"#;
        let mut text = String::new();
        for _ in 0..99 {
            text.push_str(good);
            text.push('\n');
        }
        text.push_str("{not json\n");
        fs::write(dir.path().join(REPORTS_FILE), "").unwrap();
        fs::write(dir.path().join(CODES_FILE), &text).unwrap();
        let (c, rep) = Corpus::ingest(dir.path(), IngestOptions::default()).unwrap();
        assert_eq!(rep.malformed_codes, 1);
        assert_eq!(c.patient("p").unwrap().code_events.len(), 99);

        text.push_str(r#"{"patient_id":"p","code":"191","system":"ICD11","timestamp":4}"#);
        text.push('\n');
        fs::write(dir.path().join(CODES_FILE), &text).unwrap();
        assert!(matches!(
            Corpus::ingest(dir.path(), IngestOptions::default()),
            Err(CorpusError::TooManyMalformed { malformed: 2, .. })
        ));
        assert!(Corpus::ingest(&dir.path().join("missing"), IngestOptions::default()).is_err());
    }
}
