//! JSON API over [`AnnotationService`], plus static serving for the UI bundle and images.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use miko_core::Relation;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;
use tracing::info;

use crate::error::AnnotationError;
use crate::model::Decision;
use crate::service::AnnotationService;

#[derive(Debug, Clone, Default)]
pub struct HttpConfig {
    /// Built UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
    /// Directory served at `/images`.
    pub image_root: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(err: AnnotationError) -> Self {
        let status = match &err {
            AnnotationError::InvalidValue(_) | AnnotationError::InvalidExclusion { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            AnnotationError::UnknownTask { .. }
            | AnnotationError::UnknownPost(_)
            | AnnotationError::EmptyBenchmark
            | AnnotationError::EmptyPool => StatusCode::NOT_FOUND,
            AnnotationError::UnknownAnnotator(_) => StatusCode::FORBIDDEN,
            AnnotationError::NotEligible { .. } | AnnotationError::AlreadyReviewed(_) => StatusCode::CONFLICT,
            AnnotationError::CorruptLog { .. } | AnnotationError::Kb(_) | AnnotationError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError::new(status, err.code(), err.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rej: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", rej.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({"error": {"code": self.code, "message": self.message}}));
        (self.status, body).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AnnotationError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

fn parse_relation(s: &str) -> Result<Relation, ApiError> {
    s.parse::<Relation>()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_relation", e.to_string()))
}

type Svc = Arc<AnnotationService>;

#[derive(Deserialize)]
struct NextParams {
    annotator: Option<String>,
}

async fn next_task(State(svc): State<Svc>, Query(q): Query<NextParams>) -> ApiResult<crate::model::NextTask> {
    let annotator = q
        .annotator
        .filter(|a| !a.trim().is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "missing `annotator` query parameter"))?;
    blocking(move || svc.next_task(&annotator)).await.map(Json)
}

#[derive(Deserialize)]
struct ScoreBody {
    post_id: String,
    relation: String,
    annotator_id: String,
    value: i64,
}

async fn submit_score(State(svc): State<Svc>, body: Result<Json<ScoreBody>, JsonRejection>) -> ApiResult<serde_json::Value> {
    let Json(b) = body?;
    let relation = parse_relation(&b.relation)?;
    blocking(move || svc.submit_score(&b.post_id, relation, &b.annotator_id, b.value)).await?;
    Ok(Json(json!({"ok": true})))
}

async fn aggregates(State(svc): State<Svc>) -> ApiResult<Vec<crate::model::PostAggregate>> {
    blocking(move || Ok(svc.aggregate())).await.map(Json)
}

async fn review_queue(State(svc): State<Svc>) -> ApiResult<Vec<crate::model::PostAggregate>> {
    blocking(move || Ok(svc.review_queue())).await.map(Json)
}

#[derive(Deserialize)]
struct DecisionBody {
    post_id: String,
    decision: String,
    reviewer_id: String,
    #[serde(default)]
    excluded_relations: Vec<String>,
}

async fn review_decision(State(svc): State<Svc>, body: Result<Json<DecisionBody>, JsonRejection>) -> ApiResult<serde_json::Value> {
    let Json(b) = body?;
    let decision: Decision = b
        .decision
        .parse()
        .map_err(|e: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_decision", e))?;
    let excluded = b
        .excluded_relations
        .iter()
        .map(|r| parse_relation(r))
        .collect::<Result<Vec<_>, _>>()?;
    blocking(move || svc.review_decision(&b.post_id, decision, &b.reviewer_id, &excluded)).await?;
    Ok(Json(json!({"ok": true})))
}

async fn benchmark_manifest(State(svc): State<Svc>) -> ApiResult<miko_core::eval::BenchmarkManifest> {
    blocking(move || svc.benchmark_manifest()).await.map(Json)
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(svc: Arc<AnnotationService>, cfg: &HttpConfig) -> Router {
    let api = Router::new()
        .route("/tasks/next", get(next_task))
        .route("/scores", post(submit_score))
        .route("/aggregates", get(aggregates))
        .route("/review/queue", get(review_queue))
        .route("/review/decision", post(review_decision))
        .route("/benchmark/manifest", get(benchmark_manifest))
        .fallback(not_found)
        .with_state(svc);
    let mut app = Router::new().nest("/api", api);
    if let Some(images) = &cfg.image_root {
        app = app.nest_service("/images", ServeDir::new(images));
    }
    match &cfg.ui_dir {
        Some(ui) => app.fallback_service(ServeDir::new(ui)),
        None => app.fallback(not_found),
    }
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, svc: Arc<AnnotationService>, cfg: HttpConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(svc, &cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
