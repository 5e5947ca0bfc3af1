//! HTTP service over the record store and predictor, consumed by the
//! dashboard.
//!
//! Routes:
//! * `GET  /api/health`
//! * `GET  /api/records?key=value&...` conjunctive filter over flat keys
//! * `GET  /api/meta` distinct accelerators, models, scenarios, ... for filters
//! * `POST /api/predict` a [`PredictionQuery`] plus optional cost/memory overrides
//! * `POST /api/reload` force a store re-read
//! * anything else is served from the UI directory
//!
//! The store file is append-only, so a change in its length or mtime
//! triggers a reload; the new records and predictor are swapped in together.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::warn;

use crate::dataset::{
    canonical_accelerator_key, keys, query, snapshot, DatasetStore, OpenMLPerfRecord, Predicate,
    StoreError,
};
use crate::predictor::{
    rank, CostBook, MemoryBook, PredictError, PredictionQuery, Predictor, DEFAULT_OVERHEAD_FACTOR,
};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct ApiConfig {
    pub store_path: PathBuf,
    pub costs: CostBook,
    pub memory: MemoryBook,
    pub overhead_factor: f64,
    pub ui_dir: Option<PathBuf>,
}

impl ApiConfig {
    pub fn new(store_path: impl Into<PathBuf>) -> Self {
        Self {
            store_path: store_path.into(),
            costs: CostBook::default(),
            memory: MemoryBook::default(),
            overhead_factor: DEFAULT_OVERHEAD_FACTOR,
            ui_dir: None,
        }
    }
}

struct Snapshot {
    records: Vec<OpenMLPerfRecord>,
    predictor: Option<Predictor>,
    stamp: Option<(u64, SystemTime)>,
}

fn file_stamp(path: &Path) -> Option<(u64, SystemTime)> {
    let meta = fs::metadata(path).ok()?;
    Some((meta.len(), meta.modified().ok()?))
}

impl Snapshot {
    fn load(path: &Path) -> Result<Self, StoreError> {
        let stamp = file_stamp(path);
        let store = DatasetStore::open(path)?;
        let records = store.records().to_vec();
        let predictor = Predictor::fit(&records).ok();
        Ok(Self {
            records,
            predictor,
            stamp,
        })
    }
}

pub struct ApiState {
    config: ApiConfig,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl ApiState {
    pub fn load(config: ApiConfig) -> Result<Self, StoreError> {
        let snapshot = Snapshot::load(&config.store_path)?;
        Ok(Self {
            config,
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn reload(&self) -> Result<(), StoreError> {
        let fresh = Arc::new(Snapshot::load(&self.config.store_path)?);
        *self.snapshot.write().expect("snapshot lock poisoned") = fresh;
        Ok(())
    }

    fn current(&self) -> Arc<Snapshot> {
        let snap = self
            .snapshot
            .read()
            .expect("snapshot lock poisoned")
            .clone();
        if file_stamp(&self.config.store_path) != snap.stamp {
            if let Err(e) = self.reload() {
                warn!(error = %e, "store reload failed; serving previous snapshot");
                return snap;
            }
            return self
                .snapshot
                .read()
                .expect("snapshot lock poisoned")
                .clone();
        }
        snap
    }
}

pub fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/records", get(records))
        .route("/api/meta", get(meta))
        .route("/api/predict", post(predict))
        .route("/api/reload", post(reload))
        .fallback(get(static_asset))
        .with_state(state)
}

pub struct ApiHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl ApiHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

pub async fn serve(config: ApiConfig, addr: SocketAddr) -> Result<ApiHandle, ApiError> {
    let state = Arc::new(ApiState::load(config)?);
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ApiError::Bind { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ApiError::Bind { addr, source })?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state);
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    Ok(ApiHandle {
        addr,
        shutdown: Some(tx),
        task: Some(task),
    })
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<Arc<ApiState>>) -> Response {
    let snap = state.current();
    Json(json!({
        "status": "ok",
        "records": snap.records.len(),
        "predictor_ready": snap.predictor.is_some(),
    }))
    .into_response()
}

async fn records(
    State(state): State<Arc<ApiState>>,
    Query(params): Query<Vec<(String, String)>>,
) -> Response {
    let snap = state.current();
    let filter: Vec<(String, Predicate)> = params
        .into_iter()
        .map(|(k, v)| (k, Predicate::parse(&v)))
        .collect();
    match query(&snap.records, &filter) {
        Ok(found) => Json(snapshot(&found)).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn meta(State(state): State<Arc<ApiState>>) -> Response {
    let snap = state.current();
    let distinct = |key: &str| -> BTreeSet<String> {
        snap.records
            .iter()
            .filter_map(|r| r.get_str(key).map(str::to_string))
            .collect()
    };
    let accelerators: BTreeSet<String> = snap
        .records
        .iter()
        .filter_map(|r| {
            r.get_str(keys::ACCEL_NAME)
                .map(|n| canonical_accelerator_key(r.get_str(keys::ACCEL_VENDOR), n))
        })
        .collect();
    Json(json!({
        "accelerators": accelerators,
        "vendors": distinct(keys::ACCEL_VENDOR),
        "models": distinct(keys::MODEL_NAME),
        "scenarios": distinct(keys::SCENARIO),
        "divisions": distinct(keys::DIVISION),
        "data_types": distinct(keys::MODEL_DTYPE),
        "record_count": snap.records.len(),
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct PredictRequest {
    #[serde(flatten)]
    query: PredictionQuery,
    #[serde(default)]
    costs: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    memory: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    overhead_factor: Option<f64>,
}

async fn predict(State(state): State<Arc<ApiState>>, body: Bytes) -> Response {
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    let costs = match req.costs.map(CostBook::new).transpose() {
        Ok(over) => over.map_or_else(
            || state.config.costs.clone(),
            |o| state.config.costs.merged(&o),
        ),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let memory = match req.memory.map(MemoryBook::new).transpose() {
        Ok(over) => over.map_or_else(
            || state.config.memory.clone(),
            |o| state.config.memory.merged(&o),
        ),
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let snap = state.current();
    let Some(predictor) = snap.predictor.as_ref() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no usable data");
    };
    let overhead = req.overhead_factor.unwrap_or(state.config.overhead_factor);
    match rank(predictor, &req.query, &costs, &memory, overhead) {
        Ok(report) => Json(report).into_response(),
        Err(e @ PredictError::InvalidQuery(_)) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn reload(State(state): State<Arc<ApiState>>) -> Response {
    match state.reload() {
        Ok(()) => Json(json!({ "status": "reloaded" })).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

const PLACEHOLDER_UI: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>inferbench</title></head>\n<body><h1>inferbench API</h1><p>No UI bundle configured. Start the server with <code>--ui-dir</code> to serve one.</p>\n<ul><li><a href=\"/api/health\">/api/health</a></li><li><a href=\"/api/records\">/api/records</a></li><li><a href=\"/api/meta\">/api/meta</a></li><li>POST /api/predict</li></ul></body></html>\n";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        _ => "application/octet-stream",
    }
}

async fn static_asset(State(state): State<Arc<ApiState>>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(dir) = &state.config.ui_dir else {
        return if rel == "index.html" {
            (
                [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
                PLACEHOLDER_UI,
            )
                .into_response()
        } else {
            error(StatusCode::NOT_FOUND, "not found")
        };
    };
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return error(StatusCode::BAD_REQUEST, "invalid path");
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found"),
    }
}
