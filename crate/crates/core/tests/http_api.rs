use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use iotase::agents::{LlmProvider, LlmRequest};
use iotase::config::Config;
use iotase::datamodel::UidiMessage;
use iotase::dataset::{scenario_dataset, DOG_PARK_QUERY};
use iotase::embedder::hashed_embedder;
use iotase::engine::Engine;
use iotase::providers::ProviderError;
use iotase::rag::index_catalog;
use iotase::server::router;

fn app() -> (Arc<Engine>, Router) {
    let engine = Arc::new(Engine::open(Config::default()).unwrap());
    (engine.clone(), router(engine))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn post_json(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn dog_park_request() -> String {
    json!({ "session_id": "t", "query": DOG_PARK_QUERY, "origin": { "lat": 43.679, "lon": -79.406 } }).to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn dog_park_query_round_trip() {
    let (_, app) = app();
    let (status, body) = send(&app, post_json("/query", &dog_park_request())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["route"], "iot_rag_se");
    assert_eq!(body["recommendation"]["service_name"], "dog park");
    assert!(!body["answer"].as_str().unwrap().is_empty());

    let id = body["trace_id"].as_str().unwrap();
    let (status, trace) = send(&app, get(&format!("/traces/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(trace["id"], id);
    let (status, _) = send(&app, get("/traces/0000000000000000")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_and_invalid_requests() {
    let (_, app) = app();
    let cases = [
        (json!({ "query": "   " }).to_string(), StatusCode::BAD_REQUEST),
        ("{not json".to_string(), StatusCode::BAD_REQUEST),
        (json!({ "origin": { "lat": 1, "lon": 2 } }).to_string(), StatusCode::BAD_REQUEST),
        (json!({ "query": "x".repeat(5000) }).to_string(), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({ "query": "dog park", "origin": { "lat": 91.0, "lon": 0.0 } }).to_string(), StatusCode::UNPROCESSABLE_ENTITY),
    ];
    for (body, expected) in cases {
        let (status, resp) = send(&app, post_json("/query", &body)).await;
        assert_eq!(status, expected, "{body}");
        assert!(resp["error"].is_string());
    }
}

struct DownLlm;

impl LlmProvider for DownLlm {
    fn name(&self) -> &str {
        "down"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn complete(&self, _: &LlmRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unavailable("connection refused".into()))
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn provider_outage_is_bad_gateway() {
    let ds = scenario_dataset();
    let embedder = Arc::new(hashed_embedder());
    let index = index_catalog(&ds.catalog, embedder.as_ref(), Default::default()).unwrap();
    let engine = Engine::assemble(Config::default(), ds.into(), embedder, index, Arc::new(DownLlm)).unwrap();
    let app = router(Arc::new(engine));
    let (status, body) = send(&app, post_json("/query", &dog_park_request())).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert!(body["error"].as_str().unwrap().contains("connection refused"));
}

#[tokio::test(flavor = "multi_thread")]
async fn health_reports_loaded_state() {
    let (engine, app) = app();
    let (status, h) = send(&app, get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h["status"], "ok");
    assert_eq!(h["documents"], engine.store().len());
    assert_eq!(h["index_size"], h["catalog_size"]);
    assert_eq!(h["snapshot_hash"], engine.snapshot_hash());
}

#[tokio::test(flavor = "multi_thread")]
async fn reads_do_not_mutate_the_store() {
    let (engine, app) = app();
    let before = engine.store().content_hash();
    send(&app, post_json("/query", &dog_park_request())).await;
    send(&app, get("/health")).await;
    send(&app, get("/collections/dog%20park/near?lat=43.68&lon=-79.41&k=2")).await;
    assert_eq!(engine.store().content_hash(), before);
}

#[tokio::test(flavor = "multi_thread")]
async fn ingest_then_near_reflects_update() {
    let (_, app) = app();
    let sent = Utc.with_ymd_and_hms(2024, 10, 1, 15, 0, 0).unwrap();
    let msg = UidiMessage::input("clinic-davenport", sent).with("lineup_count", 42);
    let body = format!("{}\n", serde_json::to_string(&msg).unwrap());
    let (status, report) = send(&app, post_json("/ingest", &body)).await;
    assert_eq!(status, StatusCode::OK, "{report}");
    assert_eq!(report["accepted"], 1);

    let (status, docs) = send(&app, get("/collections/walk-in%20clinic/near?lat=43.679&lon=-79.406&k=10")).await;
    assert_eq!(status, StatusCode::OK);
    let davenport = docs.as_array().unwrap().iter().find(|d| d["node_id"] == "clinic-davenport").unwrap();
    assert_eq!(davenport["extra"]["lineup_count"], 42);

    let (status, _) = send(&app, post_json("/ingest", "")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, post_json("/ingest", "garbage\n")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = send(&app, get("/collections/no%20such%20service/near?lat=43.6&lon=-79.4")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn reindex_keeps_snapshot_hash() {
    let (engine, app) = app();
    let before = engine.snapshot_hash();
    let (status, body) = send(&app, post_json("/admin/reindex", "")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["snapshot_hash"], before);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_identical_requests_agree() {
    let (_, app) = app();
    let mut tasks = Vec::new();
    for _ in 0..50 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move { send(&app, post_json("/query", &dog_park_request())).await }));
    }
    let mut bodies = Vec::new();
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(body);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test(flavor = "multi_thread")]
async fn queries_survive_concurrent_reindex() {
    let (_, app) = app();
    let swapper = {
        let app = app.clone();
        tokio::spawn(async move {
            for _ in 0..5 {
                let (status, _) = send(&app, post_json("/admin/reindex", "")).await;
                assert_eq!(status, StatusCode::OK);
            }
        })
    };
    let mut tasks = Vec::new();
    for _ in 0..40 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move { send(&app, post_json("/query", &dog_park_request())).await }));
    }
    for t in tasks {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["recommendation"]["service_name"], "dog park");
    }
    swapper.await.unwrap();
}
