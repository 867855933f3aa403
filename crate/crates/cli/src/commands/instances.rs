use distsum_core::extraction::{split_instances, split_patients, write_instances};
use distsum_core::{build_instances, ExtractionConfig, SplitSpec};
use serde_json::json;

use super::{corpus, hierarchy, out_dir, parse_triple, write_json};
use crate::args::InstancesArgs;
use crate::exit::usage;
use crate::manifest::ManifestBuilder;

pub fn run(args: InstancesArgs) -> anyhow::Result<()> {
    let spec = SplitSpec {
        ratios: parse_triple(&args.splits, "--splits")?,
        caps: parse_triple(&args.caps, "--caps")?,
        seed: args.seed,
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if args.window <= 0 || args.horizon.is_some_and(|h| h <= 0) {
        return Err(usage("--window and --horizon must be positive"));
    }
    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    let c = corpus(&args.corpus, args.max_malformed)?;
    let cfg = ExtractionConfig {
        window: args.window,
        label_horizon: args.horizon,
    };
    let (all, stats) = build_instances(&c, &h, &cfg);
    let split = split_patients(c.patient_ids(), &spec)?;
    let s = split_instances(all, &split, &spec);

    out_dir(&args.out)?;
    write_instances(&args.out.join("train.jsonl"), &s.train)?;
    write_instances(&args.out.join("validation.jsonl"), &s.validation)?;
    write_instances(&args.out.join("test.jsonl"), &s.test)?;
    let summary = json!({
        "patients": stats.patients,
        "candidate_time_points": stats.candidate_time_points,
        "instances": stats.instances,
        "dropped_no_sentences": stats.dropped_no_sentences,
        "dropped_no_positive": stats.dropped_no_positive,
        "unmapped_code_events": stats.unmapped_code_events,
        "split_patients": [split.train.len(), split.validation.len(), split.test.len()],
        "split_instances": [s.train.len(), s.validation.len(), s.test.len()],
    });
    write_json(&args.out.join("stats.json"), &summary)?;
    tracing::info!(
        train = s.train.len(),
        validation = s.validation.len(),
        test = s.test.len(),
        "wrote instances"
    );

    let mut m = ManifestBuilder::new("build-instances", &args)?;
    m.seed("split", args.seed).input(&args.corpus)?.input(&args.hierarchy)?;
    if let Some(g) = &args.gem {
        m.input(g)?;
    }
    m.finish(
        &args.out,
        &[
            "train.jsonl".into(),
            "validation.jsonl".into(),
            "test.jsonl".into(),
            "stats.json".into(),
        ],
    )?;
    Ok(())
}
