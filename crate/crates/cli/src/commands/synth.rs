use anyhow::Context;
use distsum_core::corpus::generate_synthetic;
use distsum_core::SynthConfig;

use super::{hierarchy, out_dir};
use crate::args::SynthArgs;
use crate::exit::usage;
use crate::manifest::ManifestBuilder;

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg: SynthConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(n) = args.patients {
        cfg.patients = n;
    }
    if let Some(r) = args.rho {
        cfg.rho = r;
    }
    if let Some(f) = args.paraphrase_fraction {
        cfg.paraphrase_fraction = f;
    }
    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    cfg.validate(&h).map_err(|e| usage(e.to_string()))?;
    let (corpus, oracle) = generate_synthetic(&cfg, &h, args.seed)?;

    out_dir(&args.out)?;
    corpus.export(&args.out)?;
    oracle.write(&args.out.join("oracle.jsonl"))?;
    let paraphrased = oracle.entries().filter(|e| e.paraphrased).count();
    tracing::info!(patients = corpus.len(), evidence = oracle.len(), paraphrased, "generated corpus");

    let mut m = ManifestBuilder::new("synth-data", &serde_json::json!({"args": &args, "generator": &cfg}))?;
    m.seed("synth", args.seed).input(&args.config)?.input(&args.hierarchy)?;
    if let Some(g) = &args.gem {
        m.input(g)?;
    }
    m.finish(
        &args.out,
        &["reports.jsonl".into(), "codes.jsonl".into(), "oracle.jsonl".into()],
    )?;
    Ok(())
}
