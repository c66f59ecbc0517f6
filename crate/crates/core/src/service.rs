//! HTTP API. Mutations are funneled through one writer thread; reads take a
//! shared lock and see every mutation that has already been answered.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::json;
use tokio::sync::{mpsc, oneshot};
use tower_http::cors::{Any, CorsLayer};

use crate::error::KbError;
use crate::ingest::RawReport;
use crate::kb::{AssessmentRequest, KnowledgeBase};
use crate::model::{ReportFormat, Timestamp};
use crate::statement::BeliefId;
use crate::views::IssueFilter;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8750";
pub const DEFAULT_RUN_ID: &str = "adhoc";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body_bytes: usize,
    pub queue_capacity: usize,
    pub event_page_size: usize,
    /// Origins allowed by CORS. `*` allows any; empty disables CORS headers.
    pub cors_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_body_bytes: 20 * 1024 * 1024,
            queue_capacity: 256,
            event_page_size: 500,
            cors_origins: Vec::new(),
        }
    }
}

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as Timestamp)
            .unwrap_or(0)
    })
}

/// A JSON response ready to be sent: status plus serialized body.
#[derive(Debug, Clone)]
struct Reply {
    status: StatusCode,
    body: Vec<u8>,
}

impl Reply {
    fn json<T: Serialize>(status: StatusCode, value: &T) -> Self {
        Reply {
            status,
            body: serde_json::to_vec(value).expect("response serializes"),
        }
    }

    fn error(status: StatusCode, kind: &str, message: impl std::fmt::Display) -> Self {
        Reply::json(status, &json!({ "error": kind, "message": message.to_string() }))
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let mut response = (self.status, self.body).into_response();
        response
            .headers_mut()
            .insert("content-type", HeaderValue::from_static("application/json"));
        response
    }
}

fn error_reply(err: &KbError) -> Reply {
    let (status, kind) = match err {
        KbError::Ingest(crate::error::IngestError::UnknownFormat(_)) => (StatusCode::BAD_REQUEST, "UnknownFormat"),
        KbError::Ingest(crate::error::IngestError::MalformedReport { .. }) => {
            (StatusCode::BAD_REQUEST, "MalformedReport")
        }
        KbError::Ingest(_) => (StatusCode::BAD_REQUEST, "InvalidRawReport"),
        KbError::UnknownSubject(_) => (StatusCode::NOT_FOUND, "UnknownSubject"),
        KbError::UnknownBelief(_) => (StatusCode::NOT_FOUND, "UnknownBelief"),
        KbError::InvalidAssessment(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidAssessment"),
        KbError::SchemaViolation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "SchemaViolation"),
        KbError::InvalidRuleConfig { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidRuleConfig"),
        KbError::StorageFailure(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure"),
        KbError::DivergenceGuard { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "DivergenceGuard"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
    };
    Reply::error(status, kind, err)
}

enum Command {
    Ingest(RawReport),
    Assess(AssessmentRequest),
}

struct Job {
    command: Command,
    idempotency_key: Option<String>,
    reply: oneshot::Sender<Reply>,
}

#[derive(Clone)]
pub struct AppState {
    kb: Arc<RwLock<KnowledgeBase>>,
    jobs: mpsc::Sender<Job>,
    config: Arc<ServiceConfig>,
}

impl AppState {
    /// Starts the writer thread. It stops once every clone of the state is dropped.
    pub fn new(kb: KnowledgeBase, config: ServiceConfig, clock: Clock) -> Self {
        let kb = Arc::new(RwLock::new(kb));
        let (tx, rx) = mpsc::channel(config.queue_capacity.max(1));
        let writer_kb = Arc::clone(&kb);
        std::thread::Builder::new()
            .name("kb-writer".into())
            .spawn(move || writer(writer_kb, rx, clock))
            .expect("spawn writer thread");
        AppState {
            kb,
            jobs: tx,
            config: Arc::new(config),
        }
    }

    /// Shared handle to the knowledge base, for embedding callers.
    pub fn kb(&self) -> Arc<RwLock<KnowledgeBase>> {
        Arc::clone(&self.kb)
    }

    async fn submit(&self, command: Command, idempotency_key: Option<String>) -> Reply {
        let (tx, rx) = oneshot::channel();
        let job = Job {
            command,
            idempotency_key,
            reply: tx,
        };
        match self.jobs.try_send(job) {
            Ok(()) => {}
            Err(mpsc::error::TrySendError::Full(_)) => {
                tracing::warn!("mutation queue full, rejecting request");
                return Reply::error(StatusCode::SERVICE_UNAVAILABLE, "Busy", "mutation queue is full")
            }
            Err(mpsc::error::TrySendError::Closed(_)) => {
                return Reply::error(StatusCode::SERVICE_UNAVAILABLE, "Stopped", "writer has stopped")
            }
        }
        rx.await
            .unwrap_or_else(|_| Reply::error(StatusCode::INTERNAL_SERVER_ERROR, "Internal", "writer dropped the request"))
    }
}

fn writer(kb: Arc<RwLock<KnowledgeBase>>, mut jobs: mpsc::Receiver<Job>, clock: Clock) {
    let mut replayed: HashMap<String, Reply> = HashMap::new();
    while let Some(job) = jobs.blocking_recv() {
        if let Some(cached) = job.idempotency_key.as_ref().and_then(|k| replayed.get(k)) {
            let _ = job.reply.send(cached.clone());
            continue;
        }
        let reply = {
            let mut kb = kb.write().unwrap_or_else(|p| p.into_inner());
            match job.command {
                Command::Ingest(mut raw) => {
                    raw.received_at = clock();
                    match kb.ingest(&raw) {
                        Ok(result) => Reply::json(StatusCode::ACCEPTED, &result),
                        Err(e) => error_reply(&e),
                    }
                }
                Command::Assess(request) => match kb.submit_assessment(&request, clock()) {
                    Ok(outcome) => Reply::json(StatusCode::OK, &outcome),
                    Err(e) => error_reply(&e),
                },
            }
        };
        if let Some(key) = job.idempotency_key {
            if reply.status.is_success() {
                replayed.insert(key, reply.clone());
            }
        }
        let _ = job.reply.send(reply);
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_body_bytes;
    let cors = cors_layer(&state.config.cors_origins);
    let router = Router::new()
        .route("/reports", post(post_report))
        .route("/issues", get(get_issues))
        .route("/assessments", post(post_assessment))
        .route("/beliefs/{id}/justification", get(get_justification))
        .route("/events", get(get_events))
        .route("/health", get(health).post(health))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match cors {
        Some(layer) => router.layer(layer),
        None => router,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origins.iter().any(|o| o == "*") {
        return Some(layer.allow_origin(Any));
    }
    let values: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    Some(layer.allow_origin(values))
}

fn header<'h>(headers: &'h HeaderMap, name: &str) -> Option<&'h str> {
    headers
        .get(name)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
}

async fn post_report(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Reply {
    // The writer stamps the receive time.
    let mut raw = RawReport::new(body.to_vec(), header(&headers, "x-pipeline-run-id").unwrap_or(DEFAULT_RUN_ID), 0);
    if let Some(format) = header(&headers, "x-report-format") {
        match ReportFormat::parse(format) {
            Some(f) => raw.declared_format = Some(f),
            None => return Reply::error(StatusCode::BAD_REQUEST, "UnknownFormat", format!("unknown format '{format}'")),
        }
    }
    raw.tool_hint = header(&headers, "x-tool-hint").map(str::to_string);
    let key = header(&headers, "idempotency-key").map(|k| format!("reports:{k}"));
    state.submit(Command::Ingest(raw), key).await
}

async fn post_assessment(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Reply {
    let request = match AssessmentRequest::from_json(&body) {
        Ok(r) => r,
        Err(e) => return Reply::error(StatusCode::UNPROCESSABLE_ENTITY, "InvalidAssessment", e),
    };
    let key = header(&headers, "idempotency-key").map(|k| format!("assessments:{k}"));
    state.submit(Command::Assess(request), key).await
}

async fn get_issues(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Reply {
    let filter = match IssueFilter::parse(
        params.get("status").map(String::as_str),
        params.get("min_severity").map(String::as_str),
        params.get("order").map(String::as_str),
    ) {
        Ok(f) => f,
        Err(e) => return Reply::error(StatusCode::BAD_REQUEST, "InvalidFilter", e),
    };
    let kb = state.kb.read().unwrap_or_else(|p| p.into_inner());
    Reply::json(StatusCode::OK, &kb.issues(&filter))
}

async fn get_justification(State(state): State<AppState>, Path(id): Path<String>) -> Reply {
    let Ok(id) = id.parse::<BeliefId>() else {
        return Reply::error(StatusCode::NOT_FOUND, "UnknownBelief", format!("unknown belief {id}"));
    };
    let kb = state.kb.read().unwrap_or_else(|p| p.into_inner());
    match kb.explain(&id) {
        Ok(tree) => Reply::json(StatusCode::OK, &tree),
        Err(e) => error_reply(&e),
    }
}

async fn get_events(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Reply {
    let number = |name: &str| -> Result<Option<i64>, Reply> {
        match params.get(name).filter(|v| !v.is_empty()) {
            None => Ok(None),
            Some(v) => match v.parse::<i64>() {
                Ok(n) if n >= 0 => Ok(Some(n)),
                _ => Err(Reply::error(
                    StatusCode::BAD_REQUEST,
                    "InvalidQuery",
                    format!("{name} must be a non-negative integer, got '{v}'"),
                )),
            },
        }
    };
    let since = match number("since_seq") {
        Ok(v) => v.unwrap_or(0) as u64,
        Err(r) => return r,
    };
    let limit = match number("limit") {
        Ok(v) => v.map(|n| n as usize).unwrap_or(state.config.event_page_size).min(state.config.event_page_size),
        Err(r) => return r,
    };
    let kb = state.kb.read().unwrap_or_else(|p| p.into_inner());
    let events = kb.events_since(since, limit);
    let next = events.last().map(|e| e.seq).unwrap_or(since);
    Reply::json(
        StatusCode::OK,
        &json!({
            "events": events,
            "next_seq": next,
            "head_seq": kb.state().seq(),
        }),
    )
}

async fn health(State(state): State<AppState>) -> Reply {
    let kb = state.kb.read().unwrap_or_else(|p| p.into_inner());
    Reply::json(
        StatusCode::OK,
        &json!({
            "status": "ok",
            "seq": kb.state().seq(),
            "engine": kb.status(),
        }),
    )
}

/// Serves `router` on `listener` until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
