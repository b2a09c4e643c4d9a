//! HTTP/JSON front end for the pipeline.
//!
//! One-shot jobs (`/v1/eval`, `/v1/bench`, `/v1/tune`, `/v1/generate`) run a
//! whole stream per request. Sessions keep a pipeline alive across requests so
//! a client can push a live stream in chunks.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;

use tweetguard_core::api::{
    ApiError, BenchRequest, CreateSession, ErrorBody, ErrorKind, EvalRequest, Health, SessionCreated, TuneRequest,
};
use tweetguard_core::ingest::SyntheticConfig;
use tweetguard_core::jobs::{self, JobError, Session};

/// Request bodies may carry whole streams.
pub const BODY_LIMIT: usize = 1 << 30;

type Sessions = Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Sessions,
}

struct Failure(StatusCode, ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<JobError> for Failure {
    fn from(e: JobError) -> Self {
        let status = match e {
            JobError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            JobError::Input(_) => StatusCode::BAD_REQUEST,
            JobError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(status, ApiError::from(&e))
    }
}

fn not_found(id: &str) -> Failure {
    Failure(StatusCode::NOT_FOUND, ApiError { kind: ErrorKind::NotFound, message: format!("no session `{id}`") })
}

async fn blocking<T, F>(f: F) -> Result<T, Failure>
where
    F: FnOnce() -> Result<T, JobError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure::from(JobError::Internal(format!("job aborted: {e}"))))?
        .map_err(Failure::from)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/eval", post(eval))
        .route("/v1/bench", post(bench))
        .route("/v1/tune", post(tune))
        .route("/v1/generate", post(generate))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", axum::routing::delete(delete_session))
        .route("/v1/sessions/{id}/records", post(push_records))
        .route("/v1/sessions/{id}/metrics", get(session_metrics))
        .route("/v1/sessions/{id}/report", get(session_report))
        .route("/v1/sessions/{id}/model", get(session_model))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn eval(Json(req): Json<EvalRequest>) -> Result<Response, Failure> {
    let r = blocking(move || jobs::run_eval(req.config, &req.input)).await?;
    Ok(Json(r).into_response())
}

async fn bench(Json(req): Json<BenchRequest>) -> Result<Response, Failure> {
    let r = blocking(move || jobs::run_bench(req.config, &req.workers, &req.input, req.replay_rate)).await?;
    Ok(Json(r).into_response())
}

async fn tune(Json(req): Json<TuneRequest>) -> Result<Response, Failure> {
    let r = blocking(move || jobs::run_tune(req.config, &req.grid, &req.input)).await?;
    Ok(Json(r).into_response())
}

async fn generate(Json(cfg): Json<SyntheticConfig>) -> Result<Response, Failure> {
    let text = blocking(move || jobs::generate(&cfg)).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn create_session(State(st): State<AppState>, Json(req): Json<CreateSession>) -> Result<Response, Failure> {
    let session = blocking(move || Session::new(req.config)).await?;
    let id = uuid::Uuid::new_v4().to_string();
    st.sessions.lock().expect("session table").insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(SessionCreated { id })).into_response())
}

fn session(st: &AppState, id: &str) -> Result<Arc<Mutex<Session>>, Failure> {
    st.sessions.lock().expect("session table").get(id).cloned().ok_or_else(|| not_found(id))
}

async fn delete_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, Failure> {
    st.sessions.lock().expect("session table").remove(&id).ok_or_else(|| not_found(&id))?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
struct PushParams {
    #[serde(default)]
    flush: bool,
}

/// Body is newline-delimited JSON; an empty body only advances the batch clock.
async fn push_records(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PushParams>,
    body: Bytes,
) -> Result<Response, Failure> {
    let s = session(&st, &id)?;
    let out = blocking(move || {
        let text = std::str::from_utf8(&body).map_err(|e| JobError::Input(format!("body is not UTF-8: {e}")))?;
        let mut s = s.lock().map_err(|_| JobError::Internal("session poisoned by an earlier failure".into()))?;
        let mut out = s.push_lines(text)?;
        let tail = if q.flush { s.flush()? } else { s.tick()? };
        out.batches += tail.batches;
        out.alerts.extend(tail.alerts);
        out.sample.extend(tail.sample);
        Ok(out)
    })
    .await?;
    Ok(Json(out).into_response())
}

fn with_session<T: Send + 'static>(
    st: &AppState,
    id: &str,
    f: impl FnOnce(&Session) -> T + Send + 'static,
) -> Result<impl Future<Output = Result<T, Failure>>, Failure> {
    let s = session(st, id)?;
    Ok(blocking(move || {
        let s = s.lock().map_err(|_| JobError::Internal("session poisoned by an earlier failure".into()))?;
        Ok(f(&s))
    }))
}

async fn session_metrics(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let summary = with_session(&st, &id, Session::summary)?.await?;
    Ok(Json(summary).into_response())
}

async fn session_report(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let csv = with_session(&st, &id, Session::report_csv)?.await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn session_model(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, Failure> {
    let bytes = with_session(&st, &id, Session::model_bytes)?.await?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

/// Serves on `listener` until `shutdown` resolves; in-flight requests finish first.
pub async fn serve(listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::default())).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, std::future::pending()));
    Ok((local, handle))
}
