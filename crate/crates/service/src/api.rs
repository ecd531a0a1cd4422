use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use enrichment_core::boundary::{AdaptiveBoundaries, Calibration, StandardBoundaries};
use enrichment_core::export::{self, TableName};
use enrichment_core::ingest::{estimate_population, parse_dataset, PopulationEstimate};
use enrichment_core::{
    save_parameters, Deadline, DesignTables, Error, ParameterDocument,
    Parameters, PerformanceGrid,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::AppState;

pub(crate) struct Job {
    params: Parameters,
    tables: DesignTables,
    performance: Option<PerformanceGrid>,
    body: Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobKind {
    Designs,
    Performance,
}

impl JobKind {
    fn as_str(self) -> &'static str {
        match self {
            JobKind::Designs => "designs",
            JobKind::Performance => "performance",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    /// Parameter whose invariant was violated, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DesignsResponse {
    pub job_id: String,
    pub parameters: ParameterDocument,
    pub adaptive: AdaptiveBoundaries,
    pub combined: StandardBoundaries,
    pub subpop1: StandardBoundaries,
    pub calibration: Calibration,
    pub exports: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PerformanceResponse {
    pub job_id: String,
    pub parameters: ParameterDocument,
    pub adaptive: AdaptiveBoundaries,
    pub combined: StandardBoundaries,
    pub subpop1: StandardBoundaries,
    pub calibration: Calibration,
    pub performance: PerformanceGrid,
    pub exports: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub workers: usize,
    pub cached_jobs: usize,
}

pub(crate) struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: message.into(),
                parameter: None,
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let status = match &err {
            e if e.is_validation() => StatusCode::BAD_REQUEST,
            Error::Infeasible(_) | Error::NonConvergence { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::TimeLimit => StatusCode::REQUEST_TIMEOUT,
            // The client is gone; the status is only seen in logs.
            Error::Cancelled => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let parameter = match &err {
            Error::InvalidParameter { name, .. } => Some(name.clone()),
            Error::ZeroIterations => Some("iterations".into()),
            Error::EmptyGrid => Some("grid_points".into()),
            _ => None,
        };
        Self {
            status,
            body: ErrorBody {
                error: err.to_string(),
                parameter,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, json_headers(), serde_json::to_vec(&self.body).expect("serializable")).into_response()
    }
}

fn json_headers() -> HeaderMap {
    let mut h = HeaderMap::new();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    h
}

/// Sets the flag when dropped unless disarmed, so an abandoned request stops
/// its computation.
struct CancelOnDrop {
    flag: Arc<AtomicBool>,
    armed: bool,
}

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        if self.armed {
            self.flag.store(true, Ordering::Relaxed);
        }
    }
}

fn parse_document(body: &[u8]) -> Result<ParameterDocument, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(ParameterDocument::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid parameter document: {e}")))
}

fn job_id(kind: JobKind, params: &Parameters) -> String {
    let canonical = serde_json::to_string(params).expect("serializable");
    let mut hasher = Sha256::new();
    hasher.update(kind.as_str().as_bytes());
    hasher.update(b"\n");
    hasher.update(canonical.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn export_links(id: &str, kind: JobKind) -> Vec<String> {
    let mut tables = vec![TableName::Adaptive, TableName::Combined, TableName::Subpop1, TableName::Parameters];
    if kind == JobKind::Performance {
        tables.push(TableName::Performance);
    }
    let mut links: Vec<String> = tables
        .iter()
        .map(|t| format!("/api/v1/export/{id}/{}", t.as_str()))
        .collect();
    links.push(format!("/api/v1/export/{id}/report"));
    links
}

async fn run_job(state: Arc<AppState>, kind: JobKind, body: Bytes) -> Result<Response, ApiError> {
    let started = Instant::now();
    let doc = parse_document(&body)?;
    let mut params = doc.resolve()?;
    if params.mc.calibration_paths > state.config.max_calibration_paths {
        return Err(Error::InvalidParameter {
            name: "calibration_paths".into(),
            reason: format!("at most {} on this server", state.config.max_calibration_paths),
        }
        .into());
    }
    if doc.fresh_seed == Some(true) {
        params.mc.seed = rand::random();
        params.mc.calibration_seed = rand::random();
    }
    let max = state.config.max_time_limit_secs;
    let limit = params.mc.time_limit_secs.map_or(max, |t| t.min(max));
    // The limit does not change a successful result, so it is not part of
    // the job identity.
    params.mc.time_limit_secs = None;
    let id = job_id(kind, &params);

    let cached = state.cache.lock().expect("cache lock").get(&id);
    if let Some(job) = cached {
        return Ok(job_response(&job.body, "hit", started));
    }

    let permit = Arc::clone(&state.permits)
        .acquire_owned()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "worker pool closed"))?;
    let flag = Arc::new(AtomicBool::new(false));
    let mut guard = CancelOnDrop {
        flag: Arc::clone(&flag),
        armed: true,
    };
    let job_params = params.clone();
    let computed = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        let deadline = Deadline::new(Some(limit), Some(&flag));
        let p = &job_params;
        let tables = DesignTables::calibrate_within(&p.design, &p.population, &p.mc.calibration(), &deadline)?;
        let performance = match kind {
            JobKind::Designs => None,
            JobKind::Performance => {
                let mut mc = p.mc;
                mc.time_limit_secs = Some(deadline.remaining_secs().unwrap_or(limit).max(1e-9));
                let control = enrichment_core::RunControl {
                    cancel: Some(&flag),
                    ..Default::default()
                };
                Some(enrichment_core::estimate_performance_with(
                    &p.design,
                    &p.population,
                    &tables,
                    &p.grid,
                    &mc,
                    control,
                )?)
            }
        };
        Ok::<_, Error>((tables, performance))
    })
    .await;
    guard.armed = false;
    let (tables, performance) = computed
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))??;

    let exports = export_links(&id, kind);
    let document = params.to_document();
    let body = match &performance {
        None => serde_json::to_vec(&DesignsResponse {
            job_id: id.clone(),
            parameters: document,
            adaptive: tables.adaptive.clone(),
            combined: tables.combined.clone(),
            subpop1: tables.subpop1.clone(),
            calibration: tables.calibration,
            exports,
        }),
        Some(grid) => serde_json::to_vec(&PerformanceResponse {
            job_id: id.clone(),
            parameters: document,
            adaptive: tables.adaptive.clone(),
            combined: tables.combined.clone(),
            subpop1: tables.subpop1.clone(),
            calibration: tables.calibration,
            performance: grid.clone(),
            exports,
        }),
    }
    .expect("serializable");
    let body = Bytes::from(body);
    let job = Arc::new(Job {
        params,
        tables,
        performance,
        body: body.clone(),
    });
    state.cache.lock().expect("cache lock").insert(id, job);
    Ok(job_response(&body, "miss", started))
}

fn job_response(body: &Bytes, cache: &'static str, started: Instant) -> Response {
    let mut headers = json_headers();
    headers.insert("x-cache", HeaderValue::from_static(cache));
    let ms = format!("{:.1}", started.elapsed().as_secs_f64() * 1e3);
    headers.insert("x-compute-time-ms", HeaderValue::from_str(&ms).expect("ascii"));
    (StatusCode::OK, headers, body.clone()).into_response()
}

pub(crate) async fn designs(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    run_job(state, JobKind::Designs, body).await
}

pub(crate) async fn performance(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    run_job(state, JobKind::Performance, body).await
}

pub(crate) async fn ingest(body: Bytes) -> Result<Response, ApiError> {
    let records = parse_dataset(&body)?;
    let estimate: PopulationEstimate = estimate_population(&records)?;
    let body = serde_json::to_vec(&estimate).expect("serializable");
    Ok((StatusCode::OK, json_headers(), body).into_response())
}

pub(crate) async fn export(
    State(state): State<Arc<AppState>>,
    Path((job, table)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let found = state.cache.lock().expect("cache lock").get(&job);
    let job = found.ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown job {job}")))?;
    if table == "report" || table == "report.html" {
        let html = export::html_report(&job.params, &job.tables, job.performance.as_ref());
        return Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response());
    }
    let name = TableName::parse(&table)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown table {table}")))?;
    let text = match name {
        TableName::Adaptive => export::adaptive_table_csv(&job.tables.adaptive),
        TableName::Combined => export::standard_table_csv(&job.tables.combined),
        TableName::Subpop1 => export::standard_table_csv(&job.tables.subpop1),
        TableName::Parameters => save_parameters(&job.params),
        TableName::Performance => match &job.performance {
            Some(grid) => export::performance_table_csv(grid),
            None => {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    "job has no performance results; use /api/v1/performance",
                ))
            }
        },
    };
    let disposition = format!("attachment; filename=\"{}.csv\"", name.as_str());
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        text,
    )
        .into_response())
}

pub(crate) async fn health(State(state): State<Arc<AppState>>) -> Response {
    let health = Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        workers: state.config.workers,
        cached_jobs: state.cache.lock().expect("cache lock").len(),
    };
    (StatusCode::OK, json_headers(), serde_json::to_vec(&health).expect("serializable")).into_response()
}
