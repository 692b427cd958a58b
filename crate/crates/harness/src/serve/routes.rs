use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tower_http::services::ServeDir;

use super::state::{results_payload, ResultSettings, Scheduler, VoteOutcome, VoteRejection, VoteRequest};

pub const IMAGE_CACHE_CONTROL: &str = "public, max-age=31536000, immutable";

#[derive(Clone)]
pub struct AppState {
    pub scheduler: Arc<Mutex<Scheduler>>,
    pub results: ResultSettings,
}

impl AppState {
    fn lock(&self) -> MutexGuard<'_, Scheduler> {
        // a panicked handler cannot leave the counters half-updated: the log
        // append comes before any mutation
        self.scheduler.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/api/pairs/next", get(next_pair))
        .route("/api/votes", post(post_vote))
        .route("/api/results", get(results))
        .route("/api/images/{pair_id}/{model}", get(image))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn error(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(json!({ "error": reason.into() }))).into_response()
}

async fn healthz(State(state): State<AppState>) -> Response {
    let s = state.lock();
    Json(json!({ "status": "ok", "pairs": s.pairs().len(), "votes": s.votes().len() })).into_response()
}

async fn next_pair(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(rater) = q.get("rater").map(|r| r.trim()).filter(|r| !r.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "query parameter `rater` is required");
    };
    match state.lock().next(rater, Instant::now()) {
        Some(a) => Json(a).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn post_vote(State(state): State<AppState>, body: Bytes) -> Response {
    let req: VoteRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed vote: {e}")),
    };
    let outcome = state.lock().vote(req, Instant::now());
    match outcome {
        Ok(Ok(VoteOutcome::Recorded(v))) => {
            (StatusCode::CREATED, Json(json!({ "status": "recorded", "vote": v }))).into_response()
        }
        Ok(Ok(VoteOutcome::Duplicate(v))) => Json(json!({ "status": "duplicate", "vote": v })).into_response(),
        Ok(Err(VoteRejection::Invalid(reason))) => error(StatusCode::BAD_REQUEST, reason),
        Ok(Err(VoteRejection::Conflict(reason))) => error(StatusCode::CONFLICT, reason),
        Err(e) => {
            tracing::error!(error = %format!("{e:#}"), "failed to persist vote");
            error(StatusCode::INTERNAL_SERVER_ERROR, "vote could not be stored")
        }
    }
}

async fn results(State(state): State<AppState>) -> Response {
    let settings = state.results;
    let (metadata, votes) = {
        let s = state.lock();
        (s.metadata(&settings), s.votes().to_vec())
    };
    let computed = tokio::task::spawn_blocking(move || results_payload(metadata, &votes, &settings)).await;
    match computed {
        Ok(Ok(payload)) => Json(payload).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn image(State(state): State<AppState>, UrlPath((pair_id, model)): UrlPath<(String, String)>) -> Response {
    let path = {
        let s = state.lock();
        s.pair(&pair_id)
            .and_then(|p| p.image_for(&model))
            .map(Path::to_path_buf)
    };
    let Some(path) = path else {
        return error(
            StatusCode::NOT_FOUND,
            format!("no image for model `{model}` in pair `{pair_id}`"),
        );
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => Response::builder()
            .header(header::CONTENT_TYPE, "image/png")
            .header(header::CACHE_CONTROL, IMAGE_CACHE_CONTROL)
            .body(Body::from(bytes))
            .expect("static headers are valid"),
        Err(e) => {
            tracing::error!(path = %path.display(), error = %e, "image unreadable");
            error(StatusCode::INTERNAL_SERVER_ERROR, "image unreadable")
        }
    }
}
