pub mod evaluate;
pub mod instances;
pub mod rank;
pub mod serve;
pub mod synth;
pub mod train;

use std::fs;
use std::path::Path;

use anyhow::Context;
use distsum_core::corpus::IngestOptions;
use distsum_core::extraction::read_instances;
use distsum_core::hierarchy::load_hierarchy;
use distsum_core::lexical::split_sentences;
use distsum_core::{Corpus, DiagnosisHierarchy, TfidfModel, TrainingInstance};

use crate::exit::usage;

pub fn hierarchy(path: &Path, gem: Option<&Path>) -> anyhow::Result<DiagnosisHierarchy> {
    load_hierarchy(path, gem).with_context(|| format!("loading hierarchy {}", path.display()))
}

pub fn corpus(dir: &Path, max_malformed: f64) -> anyhow::Result<Corpus> {
    let (corpus, report) = Corpus::ingest(
        dir,
        IngestOptions {
            max_malformed_fraction: max_malformed,
        },
    )
    .with_context(|| format!("loading corpus {}", dir.display()))?;
    if report.malformed_reports + report.malformed_codes > 0 {
        tracing::warn!(
            malformed_reports = report.malformed_reports,
            malformed_codes = report.malformed_codes,
            "skipped malformed corpus lines"
        );
    }
    Ok(corpus)
}

pub fn instances(path: &Path) -> anyhow::Result<Vec<TrainingInstance>> {
    read_instances(path).with_context(|| format!("loading instances {}", path.display()))
}

pub fn out_dir(path: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// TF-IDF over the given sentences plus every hierarchy description.
pub fn fit_tfidf<'a, I>(sentences: I, h: &'a DiagnosisHierarchy) -> anyhow::Result<TfidfModel>
where
    I: IntoIterator<Item = &'a str>,
{
    let docs = sentences.into_iter().chain(h.nodes().iter().map(|n| n.description.as_str()));
    TfidfModel::fit(docs).context("fitting TF-IDF")
}

pub fn corpus_sentences(c: &Corpus) -> Vec<String> {
    c.patients()
        .flat_map(|p| p.reports.iter().flat_map(|r| split_sentences(&r.text)))
        .collect()
}

pub fn parse_triple<T: std::str::FromStr>(s: &str, flag: &str) -> anyhow::Result<[T; 3]> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("{flag}: cannot parse {s:?}")))?;
    parts
        .try_into()
        .map_err(|_| usage(format!("{flag}: expected three comma-separated values, got {s:?}")))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
