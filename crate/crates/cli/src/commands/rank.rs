use std::io::Write;

use anyhow::Context;
use distsum_core::ModelF32;
use distsum_service::{AnnotationStore, AppState, ModelSelector, RankQuery, RankRequest};

use super::{corpus, corpus_sentences, fit_tfidf, hierarchy, out_dir, write_json};
use crate::args::RankArgs;
use crate::exit::usage;
use crate::manifest::ManifestBuilder;

pub fn selector_for(model: &ModelF32) -> ModelSelector {
    model.query_mode.as_str().parse().expect("every query mode names a selector")
}

pub fn run(args: RankArgs) -> anyhow::Result<()> {
    let selector = match (args.baseline.as_deref(), &args.checkpoint) {
        (Some("tfidf"), _) => None,
        (Some(_), None) => return Err(usage("--baseline contextual needs --checkpoint")),
        (Some(_), Some(_)) => Some(ModelSelector::Contextual),
        (None, Some(_)) => None,
        (None, None) => return Err(usage("one of --checkpoint or --baseline is required")),
    };
    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    let c = corpus(&args.corpus, 0.01)?;
    let sentences = corpus_sentences(&c);
    let tfidf = fit_tfidf(sentences.iter().map(String::as_str), &h)?;
    let loaded = match &args.checkpoint {
        Some(p) if args.baseline.as_deref() != Some("tfidf") => {
            Some(ModelF32::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?)
        }
        _ => None,
    };
    let model_sel = match (&loaded, selector) {
        (Some(m), None) => selector_for(m),
        (_, Some(s)) => s,
        (None, None) => ModelSelector::Tfidf,
    };
    let is_category = h.get(&args.query).is_some();
    let state = AppState::new(c, h, tfidf, AnnotationStore::in_memory());
    if let Some(m) = loaded {
        state.set_model(model_sel, m)?;
    }
    let req = RankRequest {
        patient_id: args.patient.clone(),
        time_point: args.time_point,
        query: RankQuery {
            category: is_category.then(|| args.query.clone()),
            text: (!is_category).then(|| args.query.clone()),
        },
        model: model_sel,
        top_k: args.top_k,
    };
    let resp = state.rank(&req).map_err(|e| match e {
        distsum_service::ServiceError::Unprocessable(m) => usage(m),
        other => anyhow::Error::new(other),
    })?;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&resp)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        other => other?,
    }

    if let Some(out) = &args.out {
        out_dir(out)?;
        write_json(&out.join("ranking.json"), &resp)?;
        let mut m = ManifestBuilder::new("rank", &args)?;
        m.input(&args.corpus)?.input(&args.hierarchy)?;
        for p in [&args.checkpoint, &args.gem].into_iter().flatten() {
            m.input(p)?;
        }
        m.finish(out, &["ranking.json".into()])?;
    }
    Ok(())
}
