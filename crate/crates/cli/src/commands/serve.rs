use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use distsum_core::ModelF32;
use distsum_service::{router, router_with_assets, AnnotationStore, AppState, ModelSelector};

use super::rank::selector_for;
use super::{corpus, corpus_sentences, fit_tfidf, hierarchy};
use crate::args::ServeArgs;
use crate::exit::usage;

/// Splits `selector=path`; a bare path takes its selector from the
/// checkpoint.
pub fn parse_checkpoint_spec(spec: &str) -> anyhow::Result<(Option<ModelSelector>, &Path)> {
    match spec.split_once('=') {
        Some((sel, path)) => {
            let sel: ModelSelector = sel.parse().map_err(|e: String| usage(format!("--checkpoint {spec}: {e}")))?;
            if sel == ModelSelector::Tfidf {
                return Err(usage("tfidf needs no checkpoint"));
            }
            Ok((Some(sel), Path::new(path)))
        }
        None => Ok((None, Path::new(spec))),
    }
}

pub fn build_state(args: &ServeArgs) -> anyhow::Result<AppState> {
    let h = hierarchy(&args.hierarchy, args.gem.as_deref())?;
    let c = corpus(&args.corpus, 0.01)?;
    let sentences = corpus_sentences(&c);
    let tfidf = fit_tfidf(sentences.iter().map(String::as_str), &h)?;
    let store = match &args.annotations_path {
        Some(p) => AnnotationStore::open(p).with_context(|| format!("opening annotations {}", p.display()))?,
        None => AnnotationStore::in_memory(),
    };
    let state = AppState::new(c, h, tfidf, store);
    for spec in &args.checkpoint {
        let (sel, path) = parse_checkpoint_spec(spec)?;
        let m = ModelF32::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let sel = sel.unwrap_or_else(|| selector_for(&m));
        state.set_model(sel, m).with_context(|| format!("installing {}", path.display()))?;
        tracing::info!(model = sel.as_str(), path = %path.display(), "loaded checkpoint");
    }
    Ok(state)
}

pub fn run(args: ServeArgs) -> anyhow::Result<()> {
    let state = Arc::new(build_state(&args)?);
    let app = match &args.static_dir {
        Some(dir) => router_with_assets(state, dir.clone()),
        None => router(state),
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|_| usage(format!("bad address {}:{}", args.host, args.port)))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "listening");
        axum_serve(listener, app).await
    })
}

async fn axum_serve(listener: tokio::net::TcpListener, app: axum::Router) -> anyhow::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_specs() {
        let (s, p) = parse_checkpoint_spec("hierarchy_path=/m/h.ckpt").unwrap();
        assert_eq!(s, Some(ModelSelector::Hierarchy));
        assert_eq!(p, Path::new("/m/h.ckpt"));
        assert_eq!(parse_checkpoint_spec("m.ckpt").unwrap().0, None);
        assert!(parse_checkpoint_spec("bogus=m.ckpt").is_err());
        assert!(parse_checkpoint_spec("tfidf=m.ckpt").is_err());
    }
}
