use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use anyhow::Context;
use distsum_core::evaluation::{build_report, code_predictions, rank_references, Scorer};
use distsum_core::metrics::{
    code_prediction_metrics, read_results, validated_precision, write_curve_points, write_results, AnnotationQuery,
    AnnotationRecord, AnnotationRound, RankedResult, ReferenceSummary, Subset, SubsetContext, ThresholdSource,
};
use distsum_core::{EvidenceOracle, ModelF32};
use serde_json::json;

use super::{fit_tfidf, hierarchy, instances, out_dir, write_json};
use crate::args::EvaluateArgs;
use crate::exit::usage;
use crate::manifest::ManifestBuilder;

pub const REPORT: &str = "report.json";
pub const CURVE: &str = "curve_points.tsv";
pub const RESULTS: &str = "results.jsonl";

/// Reads annotation records, one JSON object per line; extra fields such
/// as a store-assigned id are ignored.
pub fn read_annotations(path: &Path) -> anyhow::Result<Vec<AnnotationRecord>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn run(args: EvaluateArgs) -> anyhow::Result<()> {
    let subset: Subset = args.subset.parse().map_err(|e: distsum_core::metrics::MetricsError| usage(e.to_string()))?;
    let source: ThresholdSource = args
        .threshold_source
        .parse()
        .map_err(|e: distsum_core::metrics::MetricsError| usage(e.to_string()))?;
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if args.results.is_none() && args.instances.is_none() {
        return Err(usage("either --results or --instances is required"));
    }
    if args.results.is_none() && args.scorer != "tfidf" && args.checkpoint.is_none() {
        return Err(usage(format!("--scorer {} needs --checkpoint", args.scorer)));
    }
    let needs_tfidf = args.results.is_none() && args.scorer == "tfidf" || subset == Subset::TfidfZero;
    let fit_path = args.fit_instances.as_ref().or(args.instances.as_ref());
    if needs_tfidf && fit_path.is_none() {
        return Err(usage("TF-IDF needs --fit-instances or --instances"));
    }

    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    let mut custom = HashMap::new();
    let mut validated_p = None;
    let refs = match args.references.as_str() {
        "oracle" => ReferenceSummary::from_oracle(
            &EvidenceOracle::read(&args.references_path)
                .with_context(|| format!("loading oracle {}", args.references_path.display()))?,
        ),
        _ => {
            let records = read_annotations(&args.references_path)?;
            for r in &records {
                if let AnnotationQuery::Custom { name, description } = &r.query {
                    custom.insert(name.clone(), description.clone());
                }
            }
            if records.iter().any(|r| r.round == AnnotationRound::Validation) {
                validated_p = Some(validated_precision(&records));
            }
            ReferenceSummary::from_annotations(&records)
        }
    };

    let tfidf = match (needs_tfidf, fit_path) {
        (true, Some(p)) => {
            let fit = instances(p)?;
            Some(fit_tfidf(fit.iter().flat_map(|i| i.sentences.iter().map(|s| s.text.as_str())), &h)?)
        }
        _ => None,
    };
    let checkpoint = match &args.checkpoint {
        Some(p) => Some(ModelF32::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
        None => None,
    };

    let mut outputs = Vec::new();
    let mut code_metrics = None;
    let (results, refs, model_name): (Vec<RankedResult>, ReferenceSummary, String) = match &args.results {
        Some(path) => {
            let results = read_results(path).with_context(|| format!("loading results {}", path.display()))?;
            let mut kept = ReferenceSummary::new(refs.source);
            for r in &results {
                let set = refs
                    .get(&r.key)
                    .ok_or_else(|| anyhow::anyhow!("no reference for {}", r.key))?;
                kept.entries.insert(r.key.clone(), set.clone());
            }
            kept.check(&results)?;
            (results, kept, "results".into())
        }
        None => {
            let data = instances(args.instances.as_deref().expect("checked above"))?;
            let scorer: Scorer<'_, f32> = match args.scorer.as_str() {
                "tfidf" => Scorer::Tfidf(tfidf.as_ref().expect("fitted above")),
                "contextual" => Scorer::Contextual(checkpoint.as_ref().expect("checked above")),
                _ => Scorer::Attention(checkpoint.as_ref().expect("checked above")),
            };
            let (results, kept) = rank_references(&scorer, &data, &refs, &h, &custom)?;
            if let Scorer::Attention(m) = scorer {
                let (p, y) = code_predictions(m, &data, &h)?;
                if y.iter().any(|&b| b) && y.iter().any(|&b| !b) {
                    let c = code_prediction_metrics(&p, &y)?;
                    code_metrics = Some(json!({"auroc": c.auroc, "avg_precision": c.average_precision}));
                }
            }
            write_results(&args.out_results_path()?, &results)?;
            outputs.push(RESULTS.to_string());
            (results, kept, scorer.name())
        }
    };
    if results.is_empty() {
        anyhow::bail!("no instance matches any reference");
    }

    let ctx = SubsetContext { tfidf: tfidf.as_ref() };
    let (report, curves) = build_report(&model_name, &results, &refs, subset, ctx, source, args.k, validated_p)?;
    if !report.auroc.is_finite() {
        return Err(crate::exit::Numeric(format!("AUROC is {}; the subset has no positives or no negatives", report.auroc)).into());
    }
    let mut doc = report.to_json();
    if let Some(c) = code_metrics {
        doc["code_prediction"] = c;
    }
    out_dir(&args.out)?;
    write_json(&args.out.join(REPORT), &doc)?;
    let f = File::create(args.out.join(CURVE))?;
    write_curve_points(BufWriter::new(f), &curves)?;
    outputs.push(REPORT.into());
    outputs.push(CURVE.into());
    tracing::info!(model = %model_name, subset = %subset, auroc = report.auroc, ap = report.avg_precision, "evaluated");

    let mut m = ManifestBuilder::new("evaluate", &args)?;
    m.input(&args.hierarchy)?.input(&args.references_path)?;
    for p in [&args.results, &args.checkpoint, &args.instances, &args.fit_instances, &args.gem]
        .into_iter()
        .flatten()
    {
        m.input(p)?;
    }
    m.finish(&args.out, &outputs)?;
    Ok(())
}

impl EvaluateArgs {
    fn out_results_path(&self) -> anyhow::Result<std::path::PathBuf> {
        out_dir(&self.out)?;
        Ok(self.out.join(RESULTS))
    }
}
