//! HTTP service: failure notifications in, findings out.
//!
//! | method | path                      | body              | reply                  |
//! |--------|---------------------------|-------------------|------------------------|
//! | POST   | `/failures`               | `{bundle_path}`   | 202 `{finding_id}`     |
//! | GET    | `/findings/{id}`          |                   | 200 finding            |
//! | POST   | `/findings/{id}/feedback` | `{kind, user}`    | 204                    |
//! | GET    | `/metrics`                |                   | 200 metrics + latency  |
//!
//! A POST to `/failures` runs the pipeline before answering, so the finding
//! is readable as soon as its id is returned. Delivery to the webhook
//! happens afterwards in the background.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::OnceCell;

use crate::backend::CompletionBackend;
use crate::config::ServiceConfig;
use crate::diagnosis::Outcome;
use crate::error::StoreError;
use crate::feedback::{compute_metrics, FeedbackEvent, FeedbackKind, FeedbackStore, MetricsReport};
use crate::finding::{Finding, FindingStore, Link};
use crate::ingest::load_bundle;
use crate::latency::{LatencyRecorder, LatencyStats};
use crate::pipeline::{diagnose_bundle, PipelineConfig};

const WEBHOOK_RETRIES: u32 = 2;

type IdCell = Arc<OnceCell<String>>;

pub struct AppState {
    pipeline: PipelineConfig,
    backend: Arc<dyn CompletionBackend>,
    webhook_url: Option<String>,
    webhook_backoff: Duration,
    findings: Mutex<FindingStore>,
    feedback: Mutex<FeedbackStore>,
    latencies: Mutex<LatencyRecorder>,
    /// (bundle path, content hash) -> finding id.
    in_flight: Mutex<HashMap<(PathBuf, String), IdCell>>,
}

impl AppState {
    pub fn new(
        pipeline: PipelineConfig,
        backend: Arc<dyn CompletionBackend>,
        findings: FindingStore,
        mut feedback: FeedbackStore,
        webhook_url: Option<String>,
    ) -> Self {
        for id in findings.ids() {
            feedback.register_finding(id.clone());
        }
        Self {
            pipeline,
            backend,
            webhook_url,
            webhook_backoff: Duration::from_millis(200),
            findings: Mutex::new(findings),
            feedback: Mutex::new(feedback),
            latencies: Mutex::new(LatencyRecorder::default()),
            in_flight: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, String> {
        let findings = FindingStore::open(&config.findings_dir).map_err(|e| e.to_string())?;
        if let Some(parent) = config.feedback_file.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
        let feedback = FeedbackStore::open(&config.feedback_file).map_err(|e| e.to_string())?;
        Ok(Self::new(
            config.pipeline_config()?,
            config.build_backend()?,
            findings,
            feedback,
            config.webhook_url.clone(),
        ))
    }

    pub fn with_webhook_backoff(mut self, backoff: Duration) -> Self {
        self.webhook_backoff = backoff;
        self
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into() })).into_response()
}

#[derive(Deserialize)]
struct FailureRequest {
    bundle_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct FailureAccepted {
    pub finding_id: String,
}

#[derive(Deserialize)]
struct FeedbackRequest {
    kind: FeedbackKind,
    user: String,
}

/// Body of `GET /metrics`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsResponse {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub latency: Option<LatencyStats>,
}

/// JSON posted to the webhook for every new finding.
#[derive(Debug, Serialize, Deserialize)]
pub struct WebhookPayload {
    pub finding_id: String,
    pub bundle_id: String,
    pub outcome: Outcome,
    pub body_markdown: String,
    pub links: Vec<Link>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/failures", post(post_failure))
        .route("/findings/{id}", get(get_finding))
        .route("/findings/{id}/feedback", post(post_feedback))
        .route("/metrics", get(get_metrics))
        .with_state(state)
}

async fn post_failure(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: FailureRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if !req.bundle_path.is_dir() {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("bundle path {} is not a readable directory", req.bundle_path.display()),
        );
    }
    let ingestion = state.pipeline.ingestion.clone();
    let path = req.bundle_path.clone();
    let bundle = match tokio::task::spawn_blocking(move || load_bundle(&path, &ingestion)).await {
        Ok(Ok(b)) => b,
        Ok(Err(e)) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };

    let key = (absolute_bundle_path(&req.bundle_path), bundle.content_hash.clone());
    let cell = lock(&state.in_flight).entry(key).or_default().clone();
    let result = cell
        .get_or_try_init(|| {
            let state = state.clone();
            async move {
                let worker = state.clone();
                let finding = tokio::task::spawn_blocking(move || {
                    diagnose_bundle(bundle, &worker.pipeline, worker.backend.as_ref())
                        .map(|run| run.finding)
                })
                .await
                .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
                .map_err(|e| error(StatusCode::BAD_GATEWAY, e.to_string()))?;
                publish(&state, finding).map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
            }
        })
        .await;
    match result {
        Ok(id) => (StatusCode::ACCEPTED, Json(FailureAccepted { finding_id: id.clone() })).into_response(),
        Err(resp) => resp,
    }
}

/// Stores a new finding, records its latency and schedules the webhook.
fn publish(state: &Arc<AppState>, finding: Finding) -> Result<String, StoreError> {
    let id = finding.finding_id.clone();
    tracing::info!(finding = %id, outcome = finding.outcome.label(), latency_ms = finding.generation_latency.as_millis() as u64, "finding created");
    lock(&state.latencies).record(finding.generation_latency);
    let payload = WebhookPayload {
        finding_id: id.clone(),
        bundle_id: finding.bundle_id.clone(),
        outcome: finding.outcome,
        body_markdown: finding.body_markdown.clone(),
        links: finding.links.clone(),
    };
    lock(&state.findings).save(finding)?;
    lock(&state.feedback).register_finding(id.clone());
    if let Some(url) = state.webhook_url.clone() {
        let backoff = state.webhook_backoff;
        tokio::task::spawn_blocking(move || deliver_webhook(&url, &payload, backoff));
    }
    Ok(id)
}

/// Posts `payload`, retrying twice. Failures are only logged.
pub fn deliver_webhook(url: &str, payload: &WebhookPayload, backoff: Duration) -> bool {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(10)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut wait = backoff;
    for attempt in 0..=WEBHOOK_RETRIES {
        if attempt > 0 {
            std::thread::sleep(wait);
            wait *= 2;
        }
        match agent.post(url).send_json(payload) {
            Ok(r) if r.status().is_success() => return true,
            Ok(r) => tracing::warn!(status = %r.status(), attempt, "webhook rejected finding"),
            Err(e) => tracing::warn!(error = %e, attempt, "webhook delivery failed"),
        }
    }
    tracing::error!(finding = %payload.finding_id, "giving up on webhook delivery");
    false
}

async fn get_finding(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match lock(&state.findings).get(&id) {
        Some(f) => Json(f.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown finding `{id}`")),
    }
}

async fn post_feedback(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let req: FeedbackRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if req.user.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "user must not be empty");
    }
    let event = FeedbackEvent { finding_id: id, kind: req.kind, user: req.user, at: Utc::now() };
    match lock(&state.feedback).record(event) {
        Ok(_) => StatusCode::NO_CONTENT.into_response(),
        Err(e @ StoreError::UnknownFinding(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn get_metrics(State(state): State<Arc<AppState>>) -> Json<MetricsResponse> {
    let metrics = compute_metrics(&lock(&state.feedback));
    let latency = lock(&state.latencies).snapshot();
    Json(MetricsResponse { metrics, latency })
}

/// Serves on an already-bound listener until the process exits.
pub async fn serve_on(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `config.bind:config.port` and serves.
pub async fn serve(config: &ServiceConfig) -> Result<(), String> {
    let state = Arc::new(AppState::from_config(config)?);
    let addr: SocketAddr = format!("{}:{}", config.bind, config.port)
        .parse()
        .map_err(|e| format!("invalid bind address: {e}"))?;
    let listener = TcpListener::bind(addr).await.map_err(|e| format!("cannot bind {addr}: {e}"))?;
    tracing::info!(%addr, "serving");
    serve_on(listener, state).await.map_err(|e| e.to_string())
}

/// Starts the service on an ephemeral local port in a background runtime
/// and returns its base URL. Used by tests and examples.
pub fn spawn_local(state: AppState) -> std::io::Result<(String, std::thread::JoinHandle<()>)> {
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    std_listener.set_nonblocking(true)?;
    let base = format!("http://{}", std_listener.local_addr()?);
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let handle = std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = TcpListener::from_std(std_listener).expect("listener converts");
            if let Err(e) = serve_on(listener, Arc::new(state)).await {
                tracing::error!(error = %e, "service stopped");
            }
        })
    });
    Ok((base, handle))
}

fn absolute_bundle_path(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}
