//! REST surface over [`Gateway`].

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{Gateway, GatewayError, SessionOptions};
use crate::eval::TurnRating;
use crate::pipeline::PipelineError;

impl GatewayError {
    fn status(&self) -> (StatusCode, &'static str) {
        match self {
            GatewayError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            GatewayError::UnknownTurn { .. } => (StatusCode::NOT_FOUND, "unknown_turn"),
            GatewayError::RangeViolation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "range_violation"),
            GatewayError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            GatewayError::StorageFailure(_) | GatewayError::Corrupt { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "storage_failure")
            }
            GatewayError::Pipeline(PipelineError::Plan(_)) | GatewayError::Pipeline(PipelineError::Backend(_)) => {
                (StatusCode::BAD_GATEWAY, "backend_failure")
            }
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let (status, code) = self.status();
        (status, Json(json!({ "error": { "code": code, "message": self.to_string() } }))).into_response()
    }
}

type Shared = Arc<Gateway>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, GatewayError> + Send + 'static,
) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::StorageFailure(format!("worker failed: {e}")))?
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, GatewayError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| GatewayError::InvalidRequest(e.to_string()))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create(State(gw): State<Shared>, body: Bytes) -> Result<Response, GatewayError> {
    let options: SessionOptions = parse_body(&body)?;
    let id = blocking(move || gw.create_session(options)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct UtteranceBody {
    #[serde(alias = "seeker_text", alias = "utterance")]
    text: String,
}

async fn utterance(
    State(gw): State<Shared>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, GatewayError> {
    let UtteranceBody { text } = parse_body(&body)?;
    let reply = blocking(move || gw.post_utterance(&id, &text)).await?;
    Ok(Json(reply).into_response())
}

async fn rate(State(gw): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, GatewayError> {
    let rating: TurnRating = serde_json::from_slice(&body).map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
    let ack = json!({ "status": "stored", "turn_index": rating.turn_index, "rater_id": rating.rater_id });
    blocking(move || gw.rate_turn(&id, rating)).await?;
    Ok(Json(ack).into_response())
}

async fn fetch(State(gw): State<Shared>, Path(id): Path<String>) -> Result<Response, GatewayError> {
    let s = blocking(move || gw.get_session(&id)).await?;
    Ok(Json(s).into_response())
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/:id", get(fetch))
        .route("/v1/sessions/:id/utterances", post(utterance))
        .route("/v1/sessions/:id/ratings", post(rate))
        .with_state(gateway)
}

/// Serves until `shutdown` resolves. Every accepted write is already synced
/// to disk, so stopping loses nothing.
pub async fn serve(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await
}
