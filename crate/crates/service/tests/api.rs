use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use distsum_core::corpus::{Report, ReportKind};
use distsum_core::hierarchy::NodeSpec;
use distsum_core::lexical::{fingerprint, VocabConfig};
use distsum_core::metrics::{validated_precision, AnnotationQuery, AnnotationRecord, AnnotationRound};
use distsum_core::model::tfidf_scores;
use distsum_core::{
    Corpus, DiagnosisHierarchy, EncoderConfig, ModelF32, PatientRecord, QueryMode, RankingModel, TfidfModel, Vocabulary,
};
use distsum_service::{router, AnnotationStore, AppState, ModelSelector};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn hierarchy() -> DiagnosisHierarchy {
    DiagnosisHierarchy::from_specs(vec![
        NodeSpec::new("neuro", None, "Nervous system disease", &[]),
        NodeSpec::new("stroke", Some("neuro"), "Cerebral infarction", &["434"]),
        NodeSpec::new("tumor", Some("neuro"), "Malignant neoplasm of brain", &["191"]),
    ])
    .unwrap()
}

fn report(pid: &str, id: &str, t: i64, text: &str) -> Report {
    Report {
        id: id.into(),
        patient_id: pid.into(),
        kind: ReportKind::Radiology,
        timestamp: t,
        text: text.into(),
    }
}

fn corpus() -> Corpus {
    let mut solo = PatientRecord::new("solo");
    solo.reports = vec![report("solo", "s1", 1, "Enhancing mass in the left frontal lobe.")];
    let mut p = PatientRecord::new("p");
    p.reports = vec![
        report("p", "r1", 10, "Acute infarction of the left basal ganglia. No hemorrhage."),
        report("p", "r2", 40, "Headache persists. No hemorrhage. Small enhancing mass noted."),
        report("p", "r3", 90, "Follow up imaging is stable."),
        report("p", "r4", 400, "Biopsy confirms glioma."),
    ];
    Corpus::from_records([solo, p])
}

fn texts() -> Vec<String> {
    let c = corpus();
    let h = hierarchy();
    c.patients()
        .flat_map(|p| p.reports.iter().map(|r| r.text.clone()))
        .chain(h.nodes().iter().map(|n| n.description.clone()))
        .collect()
}

fn model(mode: QueryMode) -> ModelF32 {
    let t = texts();
    let vocab = Vocabulary::build(t.iter().map(String::as_str), VocabConfig::default());
    let mut cfg = EncoderConfig::new(vocab.len());
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 16;
    cfg.d_hidden = 8;
    cfg.n_layers = 1;
    RankingModel::new(cfg, vocab, &hierarchy(), mode, 1).unwrap()
}

fn tfidf() -> TfidfModel {
    let t = texts();
    TfidfModel::fit(t.iter().map(String::as_str)).unwrap()
}

fn state(store: AnnotationStore) -> Arc<AppState> {
    let s = AppState::new(corpus(), hierarchy(), tfidf(), store);
    s.set_model(ModelSelector::Indicator, model(QueryMode::Indicator)).unwrap();
    s.set_model(ModelSelector::Description, model(QueryMode::Description)).unwrap();
    s.set_model(ModelSelector::Contextual, model(QueryMode::Description)).unwrap();
    Arc::new(s)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn rank_body(patient: &str, t: i64, query: Value, model: &str, k: usize) -> Value {
    json!({"patient_id": patient, "time_point": t, "query": query, "model": model, "top_k": k})
}

#[tokio::test]
async fn one_sentence_history_gets_full_attention() {
    let app = router(state(AnnotationStore::in_memory()));
    for m in ["indicator", "description"] {
        let (st, v) = call(&app, "POST", "/rank", Some(rank_body("solo", 5, json!({"category": "tumor"}), m, 1))).await;
        assert_eq!(st, StatusCode::OK, "{v}");
        let s = v["sentences"].as_array().unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0]["sentence"], "Enhancing mass in the left frontal lobe.");
        assert_eq!(s[0]["score"], 1.0);
        assert_eq!(s[0]["report_id"], "s1");
        assert!(v["probability"].as_f64().is_some());
    }
}

#[tokio::test]
async fn error_statuses() {
    let app = router(state(AnnotationStore::in_memory()));
    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"text": "brain mass"}), "indicator", 3))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let (st, v) = call(&app, "POST", "/hierarchy/custom", Some(json!({"name": "mass", "description": "brain mass"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    let custom_id = v["id"].as_str().unwrap().to_string();
    let (st, _) =
        call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"category": custom_id}), "indicator", 3))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"category": "stroke"}), "hierarchy", 3))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("nobody", 50, json!({"category": "stroke"}), "tfidf", 3))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"category": "zzz"}), "tfidf", 3))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"category": "stroke"}), "tfidf", 0))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({}), "tfidf", 3))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, "GET", "/patients/nobody/reports", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn tfidf_free_text_returns_cosines_in_order() {
    let app = router(state(AnnotationStore::in_memory()));
    let (st, v) = call(&app, "POST", "/rank", Some(rank_body("p", 50, json!({"text": "enhancing mass"}), "tfidf", 20))).await;
    assert_eq!(st, StatusCode::OK);
    let sentences = ["Acute infarction of the left basal ganglia.", "No hemorrhage.", "Headache persists.", "Small enhancing mass noted."];
    let want = tfidf_scores(&sentences, "enhancing mass", &tfidf());
    let got = v["sentences"].as_array().unwrap();
    // "No hemorrhage." occurs twice and is listed once
    assert_eq!(got.len(), 4);
    assert_eq!(v["total_sentences"], 4);
    assert_eq!(got[0]["sentence"], "Small enhancing mass noted.");
    assert!((got[0]["score"].as_f64().unwrap() - want[3]).abs() < 1e-12);
    let scores: Vec<f64> = got.iter().map(|s| s["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(v.get("probability").is_none());
    assert!(!v.to_string().contains("tfidf"));
}

#[tokio::test]
async fn custom_category_behaves_like_its_text() {
    let app = router(state(AnnotationStore::in_memory()));
    let (st, v) = call(&app, "POST", "/hierarchy/custom", Some(json!({"name": "glioma", "description": "enhancing mass"}))).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = v["id"].as_str().unwrap().to_string();
    let (st, _) = call(&app, "POST", "/hierarchy/custom", Some(json!({"name": "glioma", "description": "other"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(&app, "POST", "/hierarchy/custom", Some(json!({"name": "stroke", "description": "x"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (_, h) = call(&app, "GET", "/hierarchy", None).await;
    assert_eq!(h["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(h["custom"][0]["id"], id.as_str());
    assert_eq!(h["nodes"][1]["parent"], "neuro");

    for m in ["tfidf", "description", "contextual"] {
        let (s1, a) = call(&app, "POST", "/rank", Some(rank_body("p", 100, json!({"category": id}), m, 10))).await;
        let (s2, b) = call(&app, "POST", "/rank", Some(rank_body("p", 100, json!({"text": "enhancing mass"}), m, 10))).await;
        assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
        assert_eq!(a, b, "{m}");
    }
}

#[tokio::test]
async fn report_windows() {
    let app = router(state(AnnotationStore::in_memory()));
    let ids = |v: &Value| -> Vec<String> {
        v["reports"].as_array().unwrap().iter().map(|r| r["id"].as_str().unwrap().to_string()).collect()
    };
    let (_, v) = call(&app, "GET", "/patients/p/reports?before=90", None).await;
    assert_eq!(ids(&v), ["r1", "r2"]);
    let (_, v) = call(&app, "GET", "/patients/p/reports?after=40", None).await;
    assert_eq!(ids(&v), ["r3", "r4"]);
    let (_, v) = call(&app, "GET", "/patients/p/reports?after=10&before=400", None).await;
    assert_eq!(ids(&v), ["r2", "r3"]);
    assert_eq!(v["reports"][0]["sentences"][2]["fingerprint"], "small enhancing mass noted.");
    let (_, v) = call(&app, "GET", "/patients", None).await;
    assert_eq!(v, json!(["p", "solo"]));
    let (_, v) = call(&app, "GET", "/models", None).await;
    assert_eq!(v["available"], json!(["tfidf", "contextual", "indicator", "description"]));
}

fn record(annotator: &str, fp: &str, report: &str, relevant: bool, round: AnnotationRound) -> AnnotationRecord {
    AnnotationRecord {
        annotator_id: annotator.into(),
        patient_id: "p".into(),
        time_point: 100,
        query: AnnotationQuery::Category {
            category_id: "tumor".into(),
        },
        fingerprint: fingerprint(fp),
        report_id: report.into(),
        relevant,
        round,
        created_at: Some(1_700_000_000),
    }
}

#[tokio::test]
async fn annotations_persist_and_feed_validated_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annotations.jsonl");
    let app = router(state(AnnotationStore::open(&path).unwrap()));
    let fixture = vec![
        record("a", "Small enhancing mass noted.", "r2", true, AnnotationRound::Validation),
        record("a", "No hemorrhage.", "r1", false, AnnotationRound::Validation),
        record("a", "Headache persists.", "r2", false, AnnotationRound::Validation),
        record("b", "Small enhancing mass noted.", "r2", true, AnnotationRound::Reference),
        record("a", "Follow up imaging is stable.", "r3", true, AnnotationRound::Validation),
    ];
    let mut ids = Vec::new();
    for r in &fixture {
        let (st, v) = call(&app, "POST", "/annotations", Some(serde_json::to_value(r).unwrap())).await;
        assert_eq!(st, StatusCode::OK, "{v}");
        ids.push(v["id"].as_u64().unwrap());
    }
    assert_eq!(ids, [1, 2, 3, 4, 5]);

    // re-post flips the mark, keeps the id
    let mut flipped = fixture[1].clone();
    flipped.relevant = true;
    let (_, v) = call(&app, "POST", "/annotations", Some(serde_json::to_value(&flipped).unwrap())).await;
    assert_eq!(v["id"], 2);

    let mut bad = fixture[0].clone();
    bad.fingerprint = "not in the record".into();
    let (st, _) = call(&app, "POST", "/annotations", Some(serde_json::to_value(&bad).unwrap())).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let mut future = fixture[0].clone();
    future.fingerprint = fingerprint("Biopsy confirms glioma.");
    future.report_id = "r4".into();
    let (st, _) = call(&app, "POST", "/annotations", Some(serde_json::to_value(&future).unwrap())).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let mut blank = fixture[0].clone();
    blank.query = AnnotationQuery::Custom {
        name: "x".into(),
        description: " ".into(),
    };
    let (st, _) = call(&app, "POST", "/annotations", Some(serde_json::to_value(&blank).unwrap())).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    let (_, all) = call(&app, "GET", "/annotations", None).await;
    assert_eq!(all.as_array().unwrap().len(), 5);
    let mut expected = fixture.clone();
    expected[1] = flipped;
    for (item, want) in all.as_array().unwrap().iter().zip(&expected) {
        let mut item = item.clone();
        item.as_object_mut().unwrap().remove("id");
        assert_eq!(item, serde_json::to_value(want).unwrap());
    }

    let (_, val) = call(&app, "GET", "/annotations?round=validation", None).await;
    let val_ids: Vec<u64> = val.as_array().unwrap().iter().map(|v| v["id"].as_u64().unwrap()).collect();
    assert_eq!(val_ids, [1, 2, 3, 5]);
    let (_, refs) = call(&app, "GET", "/annotations?round=reference", None).await;
    assert_eq!(refs.as_array().unwrap().len(), 1);

    let (_, vp) = call(&app, "GET", "/annotations/validated_precision", None).await;
    assert_eq!(vp["validated_precision"].as_f64().unwrap(), validated_precision(&expected));
    assert_eq!(vp["validated_precision"].as_f64().unwrap(), 0.75);
    assert_eq!(vp["reviewed"], 4);

    // restart
    drop(app);
    let app = router(state(AnnotationStore::open(&path).unwrap()));
    let (_, again) = call(&app, "GET", "/annotations", None).await;
    assert_eq!(again, all);
    let (_, v) = call(&app, "POST", "/annotations", Some(serde_json::to_value(&fixture[3]).unwrap())).await;
    assert_eq!(v["id"], 4);
}

#[tokio::test]
async fn ranking_does_not_mutate_state() {
    let s = state(AnnotationStore::in_memory());
    let app = router(s.clone());
    let before = serde_json::to_value(s.hierarchy_view()).unwrap();
    for m in ["tfidf", "indicator", "description", "contextual"] {
        let (st, _) = call(&app, "POST", "/rank", Some(rank_body("p", 500, json!({"category": "stroke"}), m, 5))).await;
        assert_eq!(st, StatusCode::OK);
    }
    assert_eq!(serde_json::to_value(s.hierarchy_view()).unwrap(), before);
    assert!(s.annotations(None).is_empty());
}

#[test]
fn hot_swap_checks_query_mode() {
    let s = AppState::new(corpus(), hierarchy(), tfidf(), AnnotationStore::in_memory());
    assert!(s.set_model(ModelSelector::Hierarchy, model(QueryMode::Description)).is_err());
    assert!(s.set_model(ModelSelector::Hierarchy, model(QueryMode::Hierarchy)).is_ok());
    assert!(s.set_model(ModelSelector::Hierarchy, model(QueryMode::Hierarchy)).is_ok());
    assert_eq!(s.available_models(), [ModelSelector::Tfidf, ModelSelector::Hierarchy]);
}
