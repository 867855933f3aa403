//! HTTP interface over a loaded corpus, hierarchy and trained rankers:
//! hierarchy browsing, report retrieval, query-conditioned ranking and
//! annotation storage.

pub mod api;
mod error;
pub mod store;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use distsum_core::lexical::{fingerprint, split_sentences};
use distsum_core::metrics::{percentiles, validated_precision, AnnotationQuery, AnnotationRecord, AnnotationRound};
use distsum_core::model::tfidf_scores;
use distsum_core::{Corpus, DiagnosisHierarchy, ModelF32, Scalar, TfidfModel};
use serde::Deserialize;

pub use api::*;
pub use error::ServiceError;
pub use store::{AnnotationStore, StoredAnnotation};

pub type Result<T> = std::result::Result<T, ServiceError>;

/// Shared state. The corpus, hierarchy and TF-IDF model are read-only;
/// models can be swapped while serving; annotation writes go through one
/// lock.
pub struct AppState {
    corpus: Corpus,
    hierarchy: DiagnosisHierarchy,
    tfidf: TfidfModel,
    models: RwLock<HashMap<ModelSelector, Arc<ModelF32>>>,
    custom: RwLock<BTreeMap<String, CustomCategory>>,
    annotations: Mutex<AnnotationStore>,
}

impl AppState {
    pub fn new(corpus: Corpus, hierarchy: DiagnosisHierarchy, tfidf: TfidfModel, annotations: AnnotationStore) -> Self {
        AppState {
            corpus,
            hierarchy,
            tfidf,
            models: RwLock::new(HashMap::new()),
            custom: RwLock::new(BTreeMap::new()),
            annotations: Mutex::new(annotations),
        }
    }

    /// Installs (or replaces) the model behind `selector`. Attention
    /// selectors need a checkpoint trained with the matching query mode;
    /// `contextual` uses the encoder of any checkpoint.
    pub fn set_model(&self, selector: ModelSelector, model: ModelF32) -> Result<()> {
        match selector {
            ModelSelector::Tfidf => {
                return Err(ServiceError::Unprocessable("tfidf needs no checkpoint".into()));
            }
            ModelSelector::Contextual => {}
            s => {
                if s.query_mode() != Some(model.query_mode) {
                    return Err(ServiceError::Unprocessable(format!(
                        "checkpoint was trained with {} queries, not {s}",
                        model.query_mode
                    )));
                }
            }
        }
        if model.categories.len() != self.hierarchy.len() {
            return Err(ServiceError::Unprocessable(
                "checkpoint category table does not match the hierarchy".into(),
            ));
        }
        self.models.write().expect("model lock").insert(selector, Arc::new(model));
        tracing::info!(model = %selector, "model installed");
        Ok(())
    }

    pub fn available_models(&self) -> Vec<ModelSelector> {
        let models = self.models.read().expect("model lock");
        ModelSelector::ALL
            .into_iter()
            .filter(|s| *s == ModelSelector::Tfidf || models.contains_key(s))
            .collect()
    }

    fn model(&self, selector: ModelSelector) -> Result<Arc<ModelF32>> {
        self.models
            .read()
            .expect("model lock")
            .get(&selector)
            .cloned()
            .ok_or_else(|| ServiceError::Conflict(format!("model {selector} is not loaded")))
    }

    pub fn hierarchy(&self) -> &DiagnosisHierarchy {
        &self.hierarchy
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn hierarchy_view(&self) -> HierarchyResponse {
        let h = &self.hierarchy;
        let nodes = h
            .nodes()
            .iter()
            .map(|n| HierarchyNode {
                id: n.id.clone(),
                name: n.name.clone(),
                description: n.description.clone(),
                parent: n.parent.map(|p| h.node(p).id.clone()),
                children: n.children.iter().map(|&c| h.node(c).id.clone()).collect(),
                depth: n.depth,
                leaf: n.is_leaf(),
            })
            .collect();
        let custom = self.custom.read().expect("custom lock").values().cloned().collect();
        HierarchyResponse { nodes, custom }
    }

    pub fn add_custom(&self, req: NewCustomCategory) -> Result<CustomCategory> {
        let name = req.name.trim();
        let description = req.description.trim();
        if name.is_empty() || description.is_empty() {
            return Err(ServiceError::Unprocessable(
                "custom categories need a name and a description".into(),
            ));
        }
        let id = format!("custom:{name}");
        let mut custom = self.custom.write().expect("custom lock");
        if custom.values().any(|c| c.name == name) || self.hierarchy.get(name).is_some() {
            return Err(ServiceError::Conflict(format!("category {name:?} already exists")));
        }
        let c = CustomCategory {
            id: id.clone(),
            name: name.to_string(),
            description: description.to_string(),
        };
        custom.insert(id, c.clone());
        Ok(c)
    }

    pub fn reports(&self, patient_id: &str, window: ReportWindow) -> Result<ReportsResponse> {
        let p = self
            .corpus
            .patient(patient_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown patient {patient_id:?}")))?;
        let reports = p
            .reports_between(window.after, window.before)
            .into_iter()
            .map(|r| ReportView {
                id: r.id.clone(),
                kind: r.kind,
                timestamp: r.timestamp,
                text: r.text.clone(),
                sentences: split_sentences(&r.text)
                    .into_iter()
                    .enumerate()
                    .map(|(index, text)| ReportSentence {
                        index,
                        fingerprint: fingerprint(&text),
                        text,
                    })
                    .collect(),
            })
            .collect();
        Ok(ReportsResponse {
            patient_id: patient_id.to_string(),
            reports,
        })
    }

    /// Query text plus the hierarchy category when there is one.
    fn resolve_query(&self, q: &RankQuery) -> Result<(String, Option<String>)> {
        match (&q.category, &q.text) {
            (Some(c), None) => {
                if let Some(n) = self.hierarchy.get(c) {
                    return Ok((n.description.clone(), Some(c.clone())));
                }
                let custom = self.custom.read().expect("custom lock");
                custom
                    .get(c)
                    .map(|cc| (cc.description.clone(), None))
                    .ok_or_else(|| ServiceError::NotFound(format!("unknown category {c:?}")))
            }
            (None, Some(t)) if !t.trim().is_empty() => Ok((t.clone(), None)),
            (None, Some(_)) => Err(ServiceError::Unprocessable("query text is empty".into())),
            _ => Err(ServiceError::Unprocessable(
                "query needs exactly one of category and text".into(),
            )),
        }
    }

    /// Scores every sentence before the time point. Read-only.
    pub fn rank(&self, req: &RankRequest) -> Result<RankResponse> {
        if req.top_k == 0 {
            return Err(ServiceError::Unprocessable("top_k must be at least 1".into()));
        }
        let patient = self
            .corpus
            .patient(&req.patient_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown patient {:?}", req.patient_id)))?;
        let (text, category) = self.resolve_query(&req.query)?;
        if req.model == ModelSelector::Indicator && category.is_none() {
            return Err(ServiceError::Unprocessable(
                "the indicator model only answers hierarchy categories".into(),
            ));
        }
        let model = match req.model {
            ModelSelector::Tfidf => None,
            s => Some(self.model(s)?),
        };
        let sentences = patient.sentences_before(req.time_point);
        let mut response = RankResponse {
            patient_id: req.patient_id.clone(),
            time_point: req.time_point,
            query_text: text.clone(),
            sentences: Vec::new(),
            probability: None,
            total_sentences: 0,
        };
        if sentences.is_empty() {
            return Ok(response);
        }
        let texts: Vec<&str> = sentences.iter().map(|s| s.text.as_str()).collect();
        let internal = |e: distsum_core::ModelError| ServiceError::Internal(e.to_string());
        let scores: Vec<f64> = match (req.model, model) {
            (ModelSelector::Tfidf, _) => tfidf_scores(&texts, &text, &self.tfidf),
            (ModelSelector::Contextual, Some(m)) => {
                distsum_core::model::contextual_scores(&texts, &text, &m.params, &m.vocab)
                    .map_err(|e| ServiceError::Unprocessable(e.to_string()))?
                    .into_iter()
                    .map(Scalar::to_f64_lossy)
                    .collect()
            }
            (_, Some(m)) => {
                let spec = match &category {
                    Some(c) => m.query_mode.spec(c),
                    None => m
                        .spec_for(None, Some(&text))
                        .map_err(|e| ServiceError::Unprocessable(e.to_string()))?,
                };
                let r = m.score_instance(&texts, &spec, &self.hierarchy).map_err(internal)?;
                // A free-text query has no code whose future assignment the
                // head could predict.
                if category.is_some() {
                    response.probability = r.probability.map(Scalar::to_f64_lossy);
                }
                r.scores.into_iter().map(Scalar::to_f64_lossy).collect()
            }
            (_, None) => unreachable!("non-baseline selectors resolve a model"),
        };
        let pct = percentiles(&texts, &scores).map_err(|e| ServiceError::Internal(e.to_string()))?;

        // Best-scoring occurrence of each fingerprint, score descending,
        // earlier sentences first on ties.
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut seen = HashSet::new();
        for i in order {
            let fp = fingerprint(&sentences[i].text);
            if !seen.insert(fp.clone()) {
                continue;
            }
            let s = &sentences[i];
            response.sentences.push(RankedSentence {
                sentence: s.text.clone(),
                fingerprint: fp,
                report_id: s.report_id.clone(),
                report_timestamp: s.report_timestamp,
                index: s.index,
                score: scores[i],
                percentile: pct[i],
            });
        }
        response.total_sentences = response.sentences.len();
        response.sentences.truncate(req.top_k);
        Ok(response)
    }

    fn check_annotation(&self, rec: &AnnotationRecord) -> Result<()> {
        let patient = self
            .corpus
            .patient(&rec.patient_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown patient {:?}", rec.patient_id)))?;
        match &rec.query {
            AnnotationQuery::Category { category_id } => {
                if self.hierarchy.get(category_id).is_none() {
                    return Err(ServiceError::Unprocessable(format!("unknown category {category_id:?}")));
                }
            }
            AnnotationQuery::Custom { name, description } => {
                if name.trim().is_empty() || description.trim().is_empty() {
                    return Err(ServiceError::Unprocessable(
                        "custom queries need a name and a description".into(),
                    ));
                }
            }
        }
        let found = patient
            .sentences_before(rec.time_point)
            .iter()
            .any(|s| s.report_id == rec.report_id && fingerprint(&s.text) == rec.fingerprint);
        if !found {
            return Err(ServiceError::Unprocessable(format!(
                "fingerprint {:?} is not a sentence of report {:?} before day {}",
                rec.fingerprint, rec.report_id, rec.time_point
            )));
        }
        Ok(())
    }

    pub fn add_annotation(&self, mut rec: AnnotationRecord) -> Result<u64> {
        self.check_annotation(&rec)?;
        if rec.created_at.is_none() {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs() as i64);
            rec.created_at = Some(now);
        }
        Ok(self.annotations.lock().expect("annotation lock").upsert(rec)?)
    }

    pub fn annotations(&self, round: Option<AnnotationRound>) -> Vec<StoredAnnotation> {
        self.annotations.lock().expect("annotation lock").list(round)
    }

    pub fn validated_precision(&self, annotator: Option<&str>) -> ValidatedPrecision {
        let records: Vec<AnnotationRecord> = self
            .annotations(Some(AnnotationRound::Validation))
            .into_iter()
            .map(|s| s.record)
            .filter(|r| annotator.is_none_or(|a| r.annotator_id == a))
            .collect();
        ValidatedPrecision {
            validated_precision: validated_precision(&records),
            reviewed: records.len(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct AnnotatorFilter {
    annotator: Option<String>,
}

async fn get_hierarchy(State(s): State<Arc<AppState>>) -> Json<HierarchyResponse> {
    Json(s.hierarchy_view())
}

async fn post_custom(
    State(s): State<Arc<AppState>>,
    Json(req): Json<NewCustomCategory>,
) -> Result<(axum::http::StatusCode, Json<CreatedCategory>)> {
    let c = s.add_custom(req)?;
    Ok((axum::http::StatusCode::CREATED, Json(CreatedCategory { id: c.id })))
}

async fn get_patients(State(s): State<Arc<AppState>>) -> Json<Vec<String>> {
    Json(s.corpus.patient_ids().map(str::to_string).collect())
}

async fn get_reports(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(w): Query<ReportWindow>,
) -> Result<Json<ReportsResponse>> {
    s.reports(&id, w).map(Json)
}

async fn post_rank(State(s): State<Arc<AppState>>, Json(req): Json<RankRequest>) -> Result<Json<RankResponse>> {
    let state = s.clone();
    tokio::task::spawn_blocking(move || state.rank(&req))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map(Json)
}

async fn post_annotation(
    State(s): State<Arc<AppState>>,
    Json(rec): Json<AnnotationRecord>,
) -> Result<Json<CreatedId>> {
    let state = s.clone();
    tokio::task::spawn_blocking(move || state.add_annotation(rec))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map(|id| Json(CreatedId { id }))
}

async fn get_annotations(State(s): State<Arc<AppState>>, Query(f): Query<RoundFilter>) -> Json<Vec<StoredAnnotation>> {
    Json(s.annotations(f.round))
}

async fn get_validated_precision(
    State(s): State<Arc<AppState>>,
    Query(f): Query<AnnotatorFilter>,
) -> Json<ValidatedPrecision> {
    Json(s.validated_precision(f.annotator.as_deref()))
}

async fn get_models(State(s): State<Arc<AppState>>) -> Json<ModelsResponse> {
    Json(ModelsResponse {
        available: s.available_models(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/hierarchy", get(get_hierarchy))
        .route("/hierarchy/custom", post(post_custom))
        .route("/patients", get(get_patients))
        .route("/patients/{id}/reports", get(get_reports))
        .route("/models", get(get_models))
        .route("/rank", post(post_rank))
        .route("/annotations", get(get_annotations).post(post_annotation))
        .route("/annotations/validated_precision", get(get_validated_precision))
        .with_state(state)
}

/// Router plus static UI assets served for unmatched paths.
pub fn router_with_assets(state: Arc<AppState>, assets: PathBuf) -> Router {
    router(state).fallback_service(tower_http::services::ServeDir::new(assets))
}
