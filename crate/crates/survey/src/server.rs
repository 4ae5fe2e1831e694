//! HTTP/JSON API for participants and the survey operator.
//!
//! Participant routes:
//! - `POST /sessions` → `{session_id, progress}`
//! - `GET /sessions/{id}/next` → `{headline_id, text, progress}` or `{done, progress}`
//! - `POST /sessions/{id}/judgments` with `{headline_id, answer}` → `{accepted, progress}`
//!
//! Operator routes (bearer token):
//! - `GET /surveys/{id}/aggregate`
//! - `GET /surveys/{id}/log`
//! - `GET /surveys/{id}/headlines.csv`

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::DEFAULT_THRESHOLD;
use crate::error::SurveyError;
use crate::store::{Progress, SurveyStore};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SurveyStore>,
    /// Bearer token for operator routes; `None` disables them.
    pub operator_token: Option<String>,
    pub threshold: f64,
}

impl AppState {
    pub fn new(store: SurveyStore, operator_token: Option<String>) -> AppState {
        AppState { store: Arc::new(store), operator_token, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub progress: Progress,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitJudgment {
    pub headline_id: String,
    pub answer: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: bool,
    pub progress: Progress,
}

pub struct ApiError(StatusCode, String);

impl From<SurveyError> for ApiError {
    fn from(e: SurveyError) -> Self {
        let status = match &e {
            SurveyError::UnknownSession(_) | SurveyError::UnknownHeadline(_) => StatusCode::NOT_FOUND,
            SurveyError::AlreadyAnswered => StatusCode::CONFLICT,
            SurveyError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            SurveyError::InsufficientPool { .. } | SurveyError::SingleLabelPool | SurveyError::Config(_) => {
                StatusCode::BAD_REQUEST
            }
            SurveyError::CorruptLog { .. } | SurveyError::Io(_) | SurveyError::Json(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/judgments", post(submit))
        .route("/surveys/{id}/aggregate", get(operator_aggregate))
        .route("/surveys/{id}/log", get(operator_log))
        .route("/surveys/{id}/headlines.csv", get(operator_csv))
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, SurveyError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(State(state): State<AppState>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let store = state.store.clone();
    let (session_id, progress) = blocking(move || store.start_session()).await?;
    tracing::debug!(%session_id, "session started");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id, progress })))
}

async fn next_item(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let next = state.store.next_item(&id)?;
    Ok(Json(next).into_response())
}

async fn submit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SubmitJudgment>,
) -> Result<Json<Accepted>, ApiError> {
    let store = state.store.clone();
    let progress = blocking(move || store.record_judgment(&id, &body.headline_id, &body.answer)).await?;
    Ok(Json(Accepted { accepted: true, progress }))
}

fn authorize(state: &AppState, headers: &HeaderMap, survey_id: &str) -> Result<(), ApiError> {
    let Some(expected) = state.operator_token.as_deref() else {
        return Err(ApiError(StatusCode::FORBIDDEN, "operator access disabled".into()));
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented != Some(expected) {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "operator token required".into()));
    }
    if survey_id != state.store.survey().id {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown survey `{survey_id}`")));
    }
    Ok(())
}

async fn operator_aggregate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    authorize(&state, &headers, &id)?;
    Ok(Json(state.store.aggregate(state.threshold)).into_response())
}

async fn operator_log(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    authorize(&state, &headers, &id)?;
    Ok(Json(state.store.events()).into_response())
}

async fn operator_csv(State(state): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    authorize(&state, &headers, &id)?;
    let body = state.store.aggregate(state.threshold).per_headline_csv();
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
}

/// Serves the API until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "survey service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
