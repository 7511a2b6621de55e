//! HTTP surface: stream ingestion, the operator API and a mock toxicity
//! scorer for local runs.
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with a 4xx/5xx
//! status.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use counterpoint_core::corpus::Tweet;
use counterpoint_core::scorers::{RuleToxicityScorer, ScoreRequest, ScoreResponse, API_KEY_HEADER, SCORE_PATH};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;

use crate::curation::{CurationError, EntryState, ReviewAction};
use crate::engine::{Admission, Engine};
use crate::error::PipelineError;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request("invalid_body", r.body_text())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match &e {
            PipelineError::ThetaOutOfRange(_) => ApiError::bad_request("theta_out_of_range", message),
            PipelineError::Curation(c) => {
                let status = match c {
                    CurationError::NotFound(_) => StatusCode::NOT_FOUND,
                    CurationError::Terminal { .. } => StatusCode::CONFLICT,
                    CurationError::EmptyText | CurationError::TooLong { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                };
                ApiError::new(status, c.code(), message)
            }
            _ => {
                tracing::error!(error = %e, "request failed");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// Bearer token required on every route but `/health`; `None` is dev mode.
    pub token: Option<Arc<str>>,
    decisions: mpsc::UnboundedSender<String>,
}

impl AppState {
    /// Starts the responder task, the single consumer of decided tweets.
    pub fn new(engine: Arc<Engine>, token: Option<String>) -> Self {
        let (tx, mut rx) = mpsc::unbounded_channel::<String>();
        let responder = engine.clone();
        tokio::spawn(async move {
            while let Some(tweet_id) = rx.recv().await {
                if let Err(e) = responder.respond(&tweet_id) {
                    tracing::error!(%tweet_id, error = %e, "responder failed");
                }
            }
        });
        Self {
            engine,
            token: token.map(Arc::from),
            decisions: tx,
        }
    }

    async fn score_and_commit(&self, tweet: Tweet, received_at: chrono::DateTime<chrono::Utc>) {
        let scored = self.engine.score(&tweet, received_at).await;
        match self.engine.commit(&scored) {
            Ok(c) if c.decided() => {
                let _ = self.decisions.send(c.tweet_id().to_string());
            }
            Ok(_) => {}
            Err(e) => tracing::error!(tweet_id = %tweet.id, error = %e, "commit failed"),
        }
    }
}

/// Rescores failed tweets every `every`.
pub fn spawn_retry_loop(state: AppState, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            let pending = match state
                .engine
                .with_conn(|c| crate::store::pending_retries(c, state.engine.config().max_attempts))
            {
                Ok(p) => p,
                Err(e) => {
                    tracing::error!(error = %e, "reading retry queue failed");
                    continue;
                }
            };
            for entry in pending {
                if let Ok(Some((tweet, received_at))) =
                    state.engine.with_conn(|c| crate::store::get_tweet(c, &entry.tweet_id))
                {
                    state.score_and_commit(tweet, received_at).await;
                }
            }
        }
    })
}

async fn require_token(State(state): State<AppState>, headers: HeaderMap, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing or wrong bearer token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/ingest", post(ingest))
        .route("/stats", get(stats))
        .route("/config", get(get_config))
        .route("/config/threshold", put(set_threshold))
        .route("/curation", get(list_curation).post(submit))
        .route("/curation/{id}/review", post(review))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .merge(protected)
        .with_state(state)
}

async fn ingest(State(state): State<AppState>, body: Result<Json<Tweet>, JsonRejection>) -> ApiResult<Response> {
    let Json(tweet) = body?;
    match state.engine.admit(&tweet)? {
        Admission::Filtered(reason) => Ok((
            StatusCode::OK,
            Json(json!({"status": "filtered", "reason": reason.as_str()})),
        )
            .into_response()),
        Admission::Admitted { received_at } => {
            let id = tweet.id.clone();
            let worker = state.clone();
            tokio::spawn(async move { worker.score_and_commit(tweet, received_at).await });
            Ok((
                StatusCode::ACCEPTED,
                Json(json!({"status": "accepted", "tweet_id": id})),
            )
                .into_response())
        }
    }
}

async fn stats(State(state): State<AppState>) -> Response {
    Json(state.engine.get_stats()).into_response()
}

async fn get_config(State(state): State<AppState>) -> ApiResult<Response> {
    Ok(Json(state.engine.operator_config()?).into_response())
}

#[derive(Deserialize)]
struct ThresholdBody {
    theta: f64,
    operator: String,
}

async fn set_threshold(
    State(state): State<AppState>,
    body: Result<Json<ThresholdBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(b) = body?;
    Ok(Json(state.engine.set_threshold(b.theta, &b.operator)?).into_response())
}

#[derive(Deserialize)]
struct CurationQuery {
    state: Option<String>,
}

async fn list_curation(State(state): State<AppState>, Query(q): Query<CurationQuery>) -> ApiResult<Response> {
    let filter = match q.state.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            EntryState::parse(s)
                .ok_or_else(|| ApiError::bad_request("invalid_state", format!("unknown state `{s}`")))?,
        ),
    };
    Ok(Json(state.engine.list_curation(filter)?).into_response())
}

#[derive(Deserialize)]
struct SubmitBody {
    text: String,
    #[serde(default)]
    credit_handle: Option<String>,
}

async fn submit(State(state): State<AppState>, body: Result<Json<SubmitBody>, JsonRejection>) -> ApiResult<Response> {
    let Json(b) = body?;
    let entry = state.engine.submit_positivitweet(&b.text, b.credit_handle.as_deref())?;
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

#[derive(Deserialize)]
struct ReviewBody {
    action: String,
    #[serde(default)]
    new_text: Option<String>,
    operator: String,
}

async fn review(
    State(state): State<AppState>,
    Path(id): Path<i64>,
    body: Result<Json<ReviewBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(b) = body?;
    let action = match b.action.as_str() {
        "approve" => ReviewAction::Approve,
        "reject" => ReviewAction::Reject,
        "edit_and_approve" => ReviewAction::EditAndApprove {
            new_text: b
                .new_text
                .ok_or_else(|| ApiError::bad_request("missing_new_text", "edit_and_approve needs new_text"))?,
        },
        other => {
            return Err(ApiError::bad_request(
                "invalid_action",
                format!("unknown action `{other}`"),
            ))
        }
    };
    Ok(Json(state.engine.review(id, &action, &b.operator)?).into_response())
}

#[derive(Clone)]
struct MockScorer {
    scorer: Arc<RuleToxicityScorer>,
    api_key: Option<Arc<str>>,
}

/// A toxicity service speaking the scorer wire format, answering from rules.
pub fn mock_scorer_router(scorer: RuleToxicityScorer, api_key: Option<String>) -> Router {
    Router::new()
        .route(SCORE_PATH, post(mock_score))
        .with_state(MockScorer {
            scorer: Arc::new(scorer),
            api_key: api_key.map(Arc::from),
        })
}

async fn mock_score(
    State(m): State<MockScorer>,
    headers: HeaderMap,
    body: Result<Json<ScoreRequest>, JsonRejection>,
) -> ApiResult<Json<ScoreResponse>> {
    if let Some(key) = &m.api_key {
        if headers.get(API_KEY_HEADER).and_then(|v| v.to_str().ok()) != Some(key.as_ref()) {
            return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "bad api key"));
        }
    }
    let Json(req) = body?;
    let scores = m
        .scorer
        .evaluate(&req.text, &req.attributes)
        .map_err(|attr| ApiError::bad_request("unknown_attribute", format!("no score for `{attr}`")))?;
    Ok(Json(ScoreResponse { scores }))
}
