use std::path::Path;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gazeboard::features::{FeatureRow, ProfileParam, ProfileScope};
use gazeboard::ingest::ActivityId;
use gazeboard::ml::{ModelKind, Predictor, Protocol, SplitUnit};
use gazeboard::pipeline::{self, StoredModel};
use gazeboard::stats::Factor;
use gazeboard::store::{Key, Kind, Store};
use gazeboard::synth::{generate_session, write_session_dir, ScriptStep, SynthConfig, META_FILE};
use gazeboard::{Config, Exec};
use gazeboard_service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const SESSION: &str = "s1";

struct Fixture {
    _dir: tempfile::TempDir,
    root: std::path::PathBuf,
    rows: Vec<FeatureRow>,
}

fn build_store(dir: &Path) -> Vec<FeatureRow> {
    let mut cfg = Config::default();
    cfg.exec = Exec::Sequential;
    cfg.models.forest.n_trees = 15;
    cfg.models.mlp.epochs = 15;
    let synth = SynthConfig {
        learners: 4,
        script: vec![
            ScriptStep { activity: ActivityId::Video, minutes: 2.0 },
            ScriptStep { activity: ActivityId::Reading, minutes: 2.0 },
        ],
        ..SynthConfig::default()
    };
    let raw = dir.join("raw");
    let session = generate_session(&synth, Exec::Sequential).unwrap();
    write_session_dir(&session, &raw).unwrap();
    let exports: Vec<_> = session.streams.iter().map(|(pid, _)| raw.join(format!("{pid}.tsv"))).collect();
    let store = Store::open(dir.join("store")).unwrap();
    pipeline::ingest(&store, SESSION, &raw.join(META_FILE), &exports, &cfg).unwrap();
    pipeline::tag(&store, SESSION, &cfg).unwrap();
    pipeline::features(&store, SESSION).unwrap();
    pipeline::anova(&store, SESSION, ProfileParam::AvgFixationTime, Factor::Sex, &ProfileScope::WholeSession, &cfg).unwrap();
    pipeline::heatmaps(&store, SESSION, None, &cfg).unwrap();
    pipeline::heatmaps(&store, SESSION, Some(&ActivityId::Video), &cfg).unwrap();
    let ds = pipeline::dataset(&store, SESSION, &cfg).unwrap();
    pipeline::train_model(&store, SESSION, ModelKind::Rf, &cfg).unwrap();
    pipeline::train_model(&store, SESSION, ModelKind::Mlp, &cfg).unwrap();
    pipeline::evaluate_model(&store, SESSION, ModelKind::Rf, Protocol::Split75_25, SplitUnit::Sample, &cfg).unwrap();
    ds.samples.iter().map(|s| s.row()).collect()
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let rows = build_store(dir.path());
        Fixture { root: dir.path().join("store"), _dir: dir, rows }
    })
}

fn app() -> axum::Router {
    let store = Store::open(&fixture().root).unwrap();
    router(Arc::new(AppState::new(store)), "*")
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &axum::Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

fn has_bilingual(v: &Value) -> bool {
    v["en"].is_string() && v["es"].is_string()
}

#[tokio::test]
async fn sessions_and_learners_paginate() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/sessions").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["items"], json!([SESSION]));
    let (s, v) = get(&app, "/api/v1/learners?limit=3").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 4);
    assert_eq!(v["items"].as_array().unwrap().len(), 3);
    assert_eq!(v["items"][0]["participant_id"], "P001");
    assert!(v["items"][0]["quality"].is_object());
    let (_, v) = get(&app, "/api/v1/learners?offset=3&limit=3").await;
    assert_eq!(v["items"].as_array().unwrap().len(), 1);
    let (s, _) = get(&app, "/api/v1/learners?limit=0").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn profiles_filter_by_learner_and_scope() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/profiles?learner=P002&scope=video").await;
    assert_eq!(s, StatusCode::OK);
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["participant_id"], "P002");
    let (s, _) = get(&app, "/api/v1/profiles?learner=P999").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = get(&app, "/api/v1/profiles?scope=lunch").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 0);
    let (s, _) = get(&app, "/api/v1/profiles?scope=a%2Fb").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn boxplot_groups_levels_with_labels() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/boxplot?param=avg_saccade_rate&scope=reading&by=sex").await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert!(has_bilingual(&v["labels"]["title"]));
    assert!(has_bilingual(&v["labels"]["param"]));
    let series = v["series"].as_array().unwrap();
    let n: u64 = series.iter().map(|x| x["summary"]["n"].as_u64().unwrap()).sum();
    assert_eq!(n, 4);
    for x in series {
        assert!(has_bilingual(&x["label"]));
        let q1 = x["summary"]["q1"].as_f64().unwrap();
        let q3 = x["summary"]["q3"].as_f64().unwrap();
        assert!(q1 <= x["summary"]["median"].as_f64().unwrap() && q3 >= q1);
    }
    let (s, _) = get(&app, "/api/v1/boxplot?param=blinks").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = get(&app, "/api/v1/boxplot?param=avg_fixation_time&sex=F").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["series"][0]["level"], "all");
}

#[tokio::test]
async fn anova_returns_stored_results() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/anova?factor=sex").await;
    assert_eq!(s, StatusCode::OK);
    let items = v["items"].as_array().unwrap();
    assert_eq!(items.len(), 1);
    assert_eq!(items[0]["result"]["parameter"], "avg_fixation_time");
    assert!(has_bilingual(&items[0]["labels"]["factor"]));
    let (_, v) = get(&app, "/api/v1/anova?factor=group").await;
    assert!(v["items"].as_array().unwrap().is_empty());
    let (s, _) = get(&app, "/api/v1/anova?factor=height").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn heatmap_embeds_the_stored_grid() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/heatmap/P001").await;
    assert_eq!(s, StatusCode::OK);
    assert!(has_bilingual(&v["labels"]["title"]));
    let grid = &v["grid"];
    let (w, h) = (grid["width_cells"].as_u64().unwrap(), grid["height_cells"].as_u64().unwrap());
    assert_eq!(grid["cells"].as_array().unwrap().len() as u64, w * h);
    let (s, v) = get(&app, "/api/v1/heatmap/P001?activity=video").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["grid"]["activity"], "video");
    let (s, _) = get(&app, "/api/v1/heatmap/P001?activity=reading").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = get(&app, "/api/v1/heatmap/P042").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].is_string());
}

#[tokio::test]
async fn reports_carry_table_and_labels() {
    let app = app();
    let (s, v) = get(&app, "/api/v1/reports").await;
    assert_eq!(s, StatusCode::OK);
    let item = &v["items"][0];
    assert_eq!(item["name"], "rf.split75_25.sample");
    assert!(item["table"].as_str().unwrap().contains("Accuracy test"));
    assert!(has_bilingual(&item["labels"]["video_watching"]));
    let (s, _) = get(&app, "/api/v1/reports?session=nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn online_prediction_matches_offline_model() {
    let app = app();
    let store = Store::open(&fixture().root).unwrap();
    for name in ["rf", "mlp"] {
        let stored: StoredModel = store.get(Kind::Model, &Key::session(SESSION, name)).unwrap();
        let model = stored.model().unwrap();
        for row in fixture().rows.iter().take(12) {
            let offline = model.predict(row);
            let (s, v) = post(&app, "/api/v1/predict", json!({ "features": row.to_vec(), "model": name })).await;
            assert_eq!(s, StatusCode::OK, "{v}");
            assert_eq!(v["label"], offline.label.as_str());
            assert_eq!(v["score"].as_f64().unwrap().to_bits(), offline.score.to_bits());
            assert!(has_bilingual(&v["labels"]["label"]));
        }
    }
}

#[tokio::test]
async fn model_selection_changes_default_predictor() {
    let app = app();
    let (_, v) = get(&app, "/api/v1/models").await;
    assert_eq!(v["models"], json!(["mlp", "rf"]));
    assert!(v["active"].is_null());
    let (s, _) = post(&app, "/api/v1/models/select", json!({ "name": "rf" })).await;
    assert_eq!(s, StatusCode::OK);
    let (_, v) = get(&app, "/api/v1/models").await;
    assert_eq!(v["active"]["name"], "rf");
    let row = fixture().rows[0].to_vec();
    let (_, v) = post(&app, "/api/v1/predict", json!({ "features": row })).await;
    assert_eq!(v["model"], "rf");
    let (s, _) = post(&app, "/api/v1/models/select", json!({ "name": "svm" })).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn predict_rejects_bad_inputs() {
    let app = app();
    let (s, v) = post(&app, "/api/v1/predict", json!({ "features": [1.0, 2.0] })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("16"));
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let store = Store::open(&fixture().root).unwrap();
    let app = router(Arc::new(AppState::new(store)), "http://localhost:5173");
    let req = Request::get("/api/v1/sessions")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}
