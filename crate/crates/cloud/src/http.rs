use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use kw_core::api::{CreateSession, EndSession, ErrorBody, EventBatch, SessionCreated};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::analytics;
use crate::store::{Store, StoreError};

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

/// Seeded transient 503s in front of the API.
#[derive(Debug)]
pub struct FaultInjector {
    rate: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl FaultInjector {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self { rate, rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }
    }

    fn fire(&self) -> bool {
        self.rate > 0.0 && self.rng.lock().unwrap().random::<f64>() < self.rate
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub token: Option<String>,
    pub faults: Option<Arc<FaultInjector>>,
}

pub struct ApiFailure(StatusCode, String);

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<StoreError> for ApiFailure {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownSession(_) | StoreError::UnknownAudio(_) => StatusCode::NOT_FOUND,
            StoreError::Closed(_) | StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::BAD_REQUEST,
            StoreError::Io(_) | StoreError::Corrupt { .. } => {
                log::error!("{e}");
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiFailure(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiFailure>;

fn bad_request(msg: impl Into<String>) -> ApiFailure {
    ApiFailure(StatusCode::BAD_REQUEST, msg.into())
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("invalid body: {e}")))
}

fn idempotency_key(headers: &HeaderMap) -> Option<&str> {
    headers.get("idempotency-key").and_then(|v| v.to_str().ok()).filter(|k| !k.is_empty())
}

async fn create_session(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_json(&body)?;
    let (session, created) = st.store.create_session(&req.device_id, req.started_at, idempotency_key(&headers))?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(SessionCreated { session_id: session.session_id })).into_response())
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(st.store.session(&id)?).into_response())
}

async fn post_events(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let batch: EventBatch = parse_json(&body)?;
    Ok(Json(st.store.ingest(&id, &batch.events)?).into_response())
}

async fn get_events(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = st.store.snapshot(&id)?;
    Ok(Json(EventBatch { events: snap.events.to_vec() }).into_response())
}

#[derive(Deserialize)]
struct AudioRange {
    start_ms: u64,
    end_ms: u64,
}

async fn post_audio(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(range): Query<AudioRange>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let (segment, created) = st.store.add_audio(&id, range.start_ms, range.end_ms, &body, idempotency_key(&headers))?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(serde_json::json!({ "audio_id": segment.audio_id }))).into_response())
}

async fn list_audio(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    st.store.session(&id)?;
    Ok(Json(st.store.audio_for_session(&id)).into_response())
}

async fn get_audio(State(st): State<AppState>, Path(audio_id): Path<String>) -> ApiResult<Response> {
    let (_, bytes) = st.store.audio(&audio_id)?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

async fn end_session(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: EndSession =
        if body.iter().all(u8::is_ascii_whitespace) { EndSession::default() } else { parse_json(&body)? };
    Ok(Json(st.store.end_session(&id, req.ended_at)?).into_response())
}

async fn summary(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = st.store.snapshot(&id)?;
    match analytics::summarize(&snap.session, &snap.events) {
        Some(s) => Ok(Json(s).into_response()),
        None => Err(ApiFailure(StatusCode::UNPROCESSABLE_ENTITY, format!("session {id} has no events"))),
    }
}

#[derive(Deserialize)]
struct TrendQuery {
    device_id: String,
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
}

async fn trends(State(st): State<AppState>, Query(q): Query<TrendQuery>) -> ApiResult<Response> {
    let mut rows = Vec::new();
    for session in st.store.sessions().into_iter().filter(|s| s.device_id == q.device_id) {
        let snap = st.store.snapshot(&session.session_id)?;
        if let Some(sum) = analytics::summarize(&snap.session, &snap.events) {
            rows.push((snap.session, sum));
        }
    }
    Ok(Json(analytics::trends(&q.device_id, &rows, q.from, q.to)).into_response())
}

async fn faults(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if st.faults.as_ref().is_some_and(|f| f.fire()) {
        return ApiFailure(StatusCode::SERVICE_UNAVAILABLE, "injected fault".into()).into_response();
    }
    next.run(req).await
}

async fn auth(State(st): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &st.token {
        let expected = format!("Bearer {token}");
        let given = req.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiFailure(StatusCode::UNAUTHORIZED, "missing or wrong bearer token".into()).into_response();
        }
    }
    next.run(req).await
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(post_events).get(get_events))
        .route("/sessions/{id}/audio", post(post_audio).get(list_audio))
        .route("/sessions/{id}/end", post(end_session))
        .route("/sessions/{id}/summary", get(summary))
        .route("/audio/{audio_id}", get(get_audio))
        .route("/trends", get(trends))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .layer(middleware::from_fn_with_state(state.clone(), faults));
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .nest(kw_core::api::API_PREFIX, api)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}
