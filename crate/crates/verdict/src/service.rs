//! HTTP front end: synchronous group scoring plus asynchronous evaluation jobs.

use std::collections::HashMap;
use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use uuid::Uuid;

use crate::error::HarnessError;
use crate::harness::Harness;
use crate::wire::{
    ErrorBody, ErrorResponse, EvaluateRequest, JobStatus, JobView, ScoreRequest, ScoreResponse,
    WIRE_SCHEMA_VERSION,
};

/// Evaluation uploads carry every recorded completion, so allow large bodies.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Default)]
pub struct JobTable {
    jobs: Mutex<HashMap<Uuid, JobView>>,
}

impl JobTable {
    fn update(&self, id: Uuid, f: impl FnOnce(&mut JobView)) {
        if let Some(job) = self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get_mut(&id) {
            f(job);
        }
    }

    fn insert(&self, view: JobView) {
        self.jobs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(view.job_id, view);
    }

    pub fn get(&self, id: Uuid) -> Option<JobView> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub harness: Arc<Harness>,
    pub jobs: Arc<JobTable>,
}

pub fn router(harness: Arc<Harness>) -> Router {
    let state = AppState {
        harness,
        jobs: Arc::default(),
    };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/score", post(score))
        .route("/v1/evaluate", post(evaluate))
        .route("/v1/jobs/{id}", get(job))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                kind: kind.into(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorResponse {
            schema_version: WIRE_SCHEMA_VERSION,
            error: self.body,
        };
        (self.status, Json(body)).into_response()
    }
}

pub fn status_for(e: &HarnessError) -> StatusCode {
    match e {
        HarnessError::BadRequest(_) => StatusCode::BAD_REQUEST,
        HarnessError::Invalid(_) | HarnessError::Metrics(_) | HarnessError::Corpus(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        HarnessError::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        HarnessError::Config(_) | HarnessError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<HarnessError> for ApiError {
    fn from(e: HarnessError) -> Self {
        ApiError::new(status_for(&e), e.kind(), e.to_string())
    }
}

fn internal(e: tokio::task::JoinError) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
}

/// Bodies are parsed by hand so every schema problem is a 400, whatever
/// the content type header says.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

async fn healthz(State(state): State<AppState>) -> Response {
    let health = state.harness.health();
    let status = if health.status == "ok" {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(health)).into_response()
}

async fn score(State(state): State<AppState>, body: Bytes) -> Result<Json<ScoreResponse>, ApiError> {
    let req: ScoreRequest = parse(&body)?;
    let harness = state.harness.clone();
    let response = tokio::task::spawn_blocking(move || harness.score(&req))
        .await
        .map_err(internal)??;
    Ok(Json(response))
}

async fn evaluate(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<JobView>), ApiError> {
    let req: EvaluateRequest = parse(&body)?;
    let harness = state.harness.clone();
    let plan = tokio::task::spawn_blocking(move || harness.plan_evaluation(&req))
        .await
        .map_err(internal)??;
    let view = JobView {
        schema_version: WIRE_SCHEMA_VERSION,
        job_id: Uuid::new_v4(),
        status: JobStatus::Queued,
        report: None,
        report_path: None,
        error: None,
    };
    let id = view.job_id;
    state.jobs.insert(view.clone());
    let (harness, jobs) = (state.harness.clone(), state.jobs.clone());
    tokio::task::spawn_blocking(move || {
        jobs.update(id, |job| job.status = JobStatus::Running);
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| harness.run_evaluation(&plan)));
        jobs.update(id, |job| match outcome {
            Ok(Ok(out)) => {
                job.status = JobStatus::Succeeded;
                job.report_path = Some(out.json_path.display().to_string());
                job.report = Some(out.report);
            }
            Ok(Err(e)) => {
                job.status = JobStatus::Failed;
                job.error = Some(ErrorBody {
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
            }
            Err(_) => {
                job.status = JobStatus::Failed;
                job.error = Some(ErrorBody {
                    kind: "internal".into(),
                    message: "evaluation panicked".into(),
                });
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(view)))
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<JobView>, ApiError> {
    let id = Uuid::parse_str(&id).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    state
        .jobs
        .get(id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no job {}", id)))
}

/// How long shutdown waits for in-flight requests: one execution timeout
/// plus a second of grace.
pub fn drain_period(harness: &Harness) -> Duration {
    harness.limits().wall_timeout + Duration::from_secs(1)
}

/// Serves until `shutdown` resolves, then stops accepting connections and
/// gives in-flight requests one drain period to finish.
pub async fn serve(
    listener: tokio::net::TcpListener,
    harness: Arc<Harness>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let drain = drain_period(&harness);
    let app = router(harness);
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let mut server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    tokio::select! {
        joined = &mut server => return joined.map_err(std::io::Error::other)?,
        _ = shutdown => {}
    }
    let _ = stop.send(());
    match tokio::time::timeout(drain, &mut server).await {
        Ok(joined) => joined.map_err(std::io::Error::other)?,
        Err(_) => {
            eprintln!("in-flight requests still running after {:?}; stopping anyway", drain);
            server.abort();
            Ok(())
        }
    }
}

/// Resolves on SIGINT or SIGTERM.
pub async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
}
