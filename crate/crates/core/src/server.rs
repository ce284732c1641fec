//! HTTP front end. Every handler that touches the engine runs on the
//! blocking pool, since providers may issue blocking HTTP calls.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::agents::{AgentError, QueryOutcome, MAX_QUERY_CHARS};
use crate::datamodel::GeoPoint;
use crate::engine::{Engine, EngineError};
use crate::ingest::Rejection;

pub const DEFAULT_SESSION: &str = "default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub query: String,
    #[serde(default)]
    pub origin: Option<Coordinates>,
}

pub type QueryResponse = QueryOutcome;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let status = match &e {
            AgentError::InvalidQuery(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AgentError::Provider { .. } => StatusCode::BAD_GATEWAY,
            AgentError::Prompt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::UnknownService(_) => StatusCode::NOT_FOUND,
            EngineError::Store(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

/// Shape checks that must hold before the agent loop runs. Empty queries
/// are malformed; oversize queries and bad coordinates violate invariants.
pub fn validate_request(req: &QueryRequest) -> Result<Option<GeoPoint>, ApiError> {
    if req.query.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "query is empty"));
    }
    if req.query.chars().count() > MAX_QUERY_CHARS {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("query exceeds {MAX_QUERY_CHARS} characters"),
        ));
    }
    req.origin
        .as_ref()
        .map(|c| GeoPoint::new(c.lat, c.lon).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())))
        .transpose()
}

async fn query(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body?;
    let origin = validate_request(&req)?;
    let session = req.session_id.unwrap_or_else(|| DEFAULT_SESSION.to_string());
    let out = blocking(move || engine.query(&session, &req.query, origin)).await??;
    Ok(Json(out))
}

async fn trace(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match engine.trace(&id) {
        Some(t) => Ok(Json(t).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no trace {id}"))),
    }
}

async fn health(State(engine): State<Arc<Engine>>) -> Result<Response, ApiError> {
    Ok(Json(blocking(move || engine.health()).await?).into_response())
}

async fn ingest(State(engine): State<Arc<Engine>>, body: String) -> Result<Response, ApiError> {
    let report = blocking(move || engine.ingest_body(&body)).await?;
    if report.received == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "no messages in body"));
    }
    // Nothing parsed at all: the body itself is malformed.
    let unparsed = report.rejections.iter().all(|r| matches!(r.reason, Rejection::Malformed { .. }));
    let status = if report.accepted == 0 && unparsed { StatusCode::BAD_REQUEST } else { StatusCode::OK };
    Ok((status, Json(report)).into_response())
}

async fn reindex(State(engine): State<Arc<Engine>>) -> Result<Response, ApiError> {
    let hash = blocking(move || engine.reindex()).await??;
    Ok(Json(json!({ "snapshot_hash": hash })).into_response())
}

#[derive(Debug, Deserialize)]
struct NearParams {
    lat: f64,
    lon: f64,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    5
}

async fn near(
    State(engine): State<Arc<Engine>>,
    Path(service): Path<String>,
    params: Result<Query<NearParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(p) = params.map_err(|r| ApiError::new(StatusCode::BAD_REQUEST, r.body_text()))?;
    let origin = GeoPoint::new(p.lat, p.lon).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    let docs = blocking(move || engine.near(&service, origin, p.k)).await??;
    Ok(Json(docs).into_response())
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/query", post(query))
        .route("/traces/{id}", get(trace))
        .route("/health", get(health))
        .route("/ingest", post(ingest))
        .route("/admin/reindex", post(reindex))
        .route("/collections/{service}/near", get(near))
        .layer(CorsLayer::permissive())
        .with_state(engine)
}

/// Serves until ctrl-c.
pub async fn serve(engine: Arc<Engine>, listen: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
