//! HTTP front end for [`SessionService`].
//!
//! Every error body is `{"code": ..., "message": ...}` where `code` is the
//! stable identifier from [`SessionError::code`] or one of the request-level
//! codes below.

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;

use navxai::advisor::TemplateBank;
use navxai::predictor::PredictorModel;
use navxai::session::{
    CreateSessionRequest, DecisionRequest, EventStore, FeedbackRequest, ServiceConfig, SessionError, SessionService,
    SurveyRequest,
};
use navxai::world::{TaskBank, WorldConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Number of tasks in the bank generated when none is supplied.
pub const DEFAULT_TASK_COUNT: usize = 11;

#[derive(Debug)]
pub enum ApiError {
    Session(SessionError),
    BadBody(String),
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::Session(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::Session(e) => (e.http_status(), e.code(), e.to_string()),
            ApiError::BadBody(m) => (400, "invalid_body", m),
        };
        let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "code": code, "message": message }))).into_response()
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadBody(e.to_string()))
}

type Svc = Arc<SessionService>;

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": VERSION }))
}

async fn create(State(svc): State<Svc>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSessionRequest = parse(&body)?;
    Ok((StatusCode::CREATED, Json(svc.create(req)?)))
}

async fn interaction(State(svc): State<Svc>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.interaction(&id)?))
}

async fn decision(State(svc): State<Svc>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: DecisionRequest = parse(&body)?;
    Ok(Json(svc.decision(&id, req)?))
}

async fn feedback(State(svc): State<Svc>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: FeedbackRequest = parse(&body)?;
    Ok(Json(svc.feedback(&id, req)?))
}

async fn survey(State(svc): State<Svc>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: SurveyRequest = parse(&body)?;
    Ok(Json(svc.survey(&id, req)?))
}

async fn log(State(svc): State<Svc>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(svc.log(&id)?))
}

async fn sessions(State(svc): State<Svc>) -> impl IntoResponse {
    Json(svc.list())
}

async fn export(State(svc): State<Svc>) -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], svc.export_csv())
}

async fn not_found() -> ApiError {
    ApiError::Session(SessionError::NotFound("route".into()))
}

pub fn router(service: Svc) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/interaction", get(interaction))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/survey", post(survey))
        .route("/sessions/{id}/log", get(log))
        .route("/admin/sessions", get(sessions))
        .route("/admin/export", get(export))
        .fallback(not_found)
        .with_state(service)
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("task bank {0}: {1}")]
    Tasks(PathBuf, String),
    #[error("template bank {0}: {1}")]
    Templates(PathBuf, String),
    #[error("model {0}: {1}")]
    Model(PathBuf, String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

/// Inputs for [`build_service`]. Missing paths fall back to built-in
/// defaults; a missing data dir keeps sessions in memory only.
#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub data_dir: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub seed: u64,
}

fn read(path: &PathBuf) -> Result<String, StartupError> {
    std::fs::read_to_string(path).map_err(|source| StartupError::Io { path: path.clone(), source })
}

/// Loads every input up front so bad paths fail before binding.
pub fn service_config(opts: &ServeOptions) -> Result<ServiceConfig, StartupError> {
    let tasks = match &opts.tasks {
        Some(p) => TaskBank::from_json(&read(p)?).map_err(|e| StartupError::Tasks(p.clone(), e.to_string()))?,
        None => TaskBank::generate(DEFAULT_TASK_COUNT, opts.seed, &WorldConfig::default())
            .map_err(|e| StartupError::Session(e.into()))?,
    };
    let mut cfg = ServiceConfig::new(tasks);
    if let Some(p) = &opts.templates {
        let bank = TemplateBank::from_json(&read(p)?).map_err(|e| StartupError::Templates(p.clone(), e.to_string()))?;
        let bank = Arc::new(bank);
        cfg.population_templates = bank.clone();
        cfg.personalization_templates = bank;
    }
    if let Some(p) = &opts.model {
        let model = PredictorModel::from_json(&read(p)?).map_err(|e| StartupError::Model(p.clone(), e.to_string()))?;
        cfg.model = Some(Arc::new(model));
    }
    if let Some(dir) = &opts.data_dir {
        cfg.store = Some(EventStore::open(dir)?);
    }
    cfg.base_seed = opts.seed;
    Ok(cfg)
}

pub fn build_service(opts: &ServeOptions) -> Result<SessionService, StartupError> {
    Ok(SessionService::new(service_config(opts)?)?)
}

/// Serves until `shutdown` resolves. Each command is persisted before its
/// response is sent, so nothing is left to flush afterwards.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Svc,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await
}
