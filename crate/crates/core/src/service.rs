//! HTTP API over a [`Workspace`].
//!
//! | Route | Success |
//! |---|---|
//! | `GET /health` | `{"status":"ok"}` |
//! | `POST /sites` | 201 site record (200 when an identical site exists) |
//! | `GET /sites`, `GET /sites/{id}` | site records with readiness |
//! | `POST /sites/{id}/images` | 201 asset ref; multipart `file`, `azimuth_deg`, optional `source`, `captured_at` |
//! | `POST /jobs` | 202 `{"job_id"}`; runs in the background |
//! | `GET /jobs`, `GET /jobs/{id}` | job snapshots |
//! | `POST /jobs/{id}/retry` | 202 `{"job_id"}` |
//! | `GET /assets/{asset_id}` | raw bytes, `ETag` = asset id |
//! | `GET /models/{job_id}/model.gltf\|model.glb\|model.obj` | raw bytes, `ETag` = asset id |
//! | `GET /metrics?format=json\|csv` | rows and summary of completed jobs |
//!
//! Every other outcome is an [`ApiError`] JSON body.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE, ETAG, IF_NONE_MATCH};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::task::JoinHandle;

use crate::assets::{AssetRef, MediaType};
use crate::catalog::{readiness, Capture, CaptureSource, ReadinessReport, SiteRecord};
use crate::error::ApiError;
use crate::kv;
use crate::metrics::{aggregate, emit_report, BaselineHours, MetricsRow, MetricsSummary, ReportFormat};
use crate::pipeline::{GenerationJob, JobConfig, Stage};
use crate::workspace::Workspace;

pub const ENV_DATA_DIR: &str = "HERITAGE3D_DATA_DIR";
pub const ENV_PORT: &str = "HERITAGE3D_PORT";
pub const ENV_BIND: &str = "HERITAGE3D_BIND";
pub const DEFAULT_PORT: u16 = 8080;
const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// Settings read from a `key=value` file (`data_dir`, `port`, `bind`) and
/// then overridden by environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    pub port: u16,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("heritage-data"),
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ApiError> {
        let map = kv::parse(text).map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
        let mut config = Self::default();
        config.apply(&map)?;
        Ok(config)
    }

    fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<(), ApiError> {
        for (key, value) in map {
            match key.as_str() {
                "data_dir" => self.data_dir = PathBuf::from(value),
                "bind" => self.bind = value.clone(),
                "port" => {
                    self.port = value
                        .parse()
                        .map_err(|_| ApiError::bad_request("invalid_config", format!("port {value:?} is not a port number")))?
                }
                other => return Err(ApiError::bad_request("invalid_config", format!("unknown config key {other:?}"))),
            }
        }
        Ok(())
    }

    /// Applies `HERITAGE3D_DATA_DIR`, `HERITAGE3D_PORT` and `HERITAGE3D_BIND`.
    pub fn with_env(mut self) -> Result<Self, ApiError> {
        let mut map = BTreeMap::new();
        for (var, key) in [(ENV_DATA_DIR, "data_dir"), (ENV_PORT, "port"), (ENV_BIND, "bind")] {
            if let Ok(v) = std::env::var(var) {
                map.insert(key.to_string(), v);
            }
        }
        self.apply(&map)?;
        Ok(self)
    }

    pub fn addr(&self) -> String {
        format!("{}:{}", self.bind, self.port)
    }
}

struct Inner {
    ws: Arc<Workspace>,
    stop: Arc<AtomicBool>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(ws: Arc<Workspace>) -> Self {
        Self(Arc::new(Inner {
            ws,
            stop: Arc::new(AtomicBool::new(false)),
            tasks: Mutex::new(Vec::new()),
        }))
    }

    fn spawn_job(&self, job_id: String) {
        let orch = self.0.ws.orchestrator.clone();
        let stop = self.0.stop.clone();
        let handle = tokio::task::spawn_blocking(move || {
            if let Err(e) = orch.run_until(&job_id, &stop) {
                tracing::error!(job_id, error = %e, "job runner stopped");
            }
        });
        let mut tasks = self.0.tasks.lock();
        tasks.retain(|t| !t.is_finished());
        tasks.push(handle);
    }

    /// Stops job runners after their current stage and waits for them.
    pub async fn drain(&self) {
        self.0.stop.store(true, Ordering::SeqCst);
        let tasks: Vec<_> = self.0.tasks.lock().drain(..).collect();
        for t in tasks {
            let _ = t.await;
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sites", post(create_site).get(list_sites))
        .route("/sites/{id}", get(get_site))
        .route("/sites/{id}/images", post(upload_image))
        .route("/jobs", post(create_job).get(list_jobs))
        .route("/jobs/{id}", get(get_job))
        .route("/jobs/{id}/retry", post(retry_job))
        .route("/assets/{asset_id}", get(get_asset))
        .route("/models/{job_id}/{file}", get(get_model))
        .route("/metrics", get(get_metrics))
        .fallback(|| async { ApiError::not_found("route_not_found", "no such route") })
        .method_not_allowed_fallback(|| async { ApiError::new(405, "method_not_allowed", "method not allowed on this route") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then lets running job stages finish.
pub async fn serve(
    listener: tokio::net::TcpListener,
    ws: Arc<Workspace>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let state = AppState::new(ws);
    let app = router(state.clone());
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    state.drain().await;
    Ok(())
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteInput {
    #[serde(default)]
    site_id: String,
    name: String,
    #[serde(default)]
    site_type: String,
    #[serde(default)]
    material: String,
    #[serde(default)]
    features: Vec<String>,
    #[serde(default)]
    location: String,
    #[serde(default)]
    scale_elements: Vec<String>,
    #[serde(default)]
    illumination: String,
    #[serde(default)]
    baseline_hours: Option<BaselineHours>,
}

impl From<SiteInput> for SiteRecord {
    fn from(s: SiteInput) -> Self {
        SiteRecord {
            site_id: s.site_id,
            name: s.name,
            site_type: s.site_type,
            material: s.material,
            features: s.features,
            location: s.location,
            scale_elements: s.scale_elements,
            illumination: s.illumination,
            baseline_hours: s.baseline_hours,
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SiteView {
    #[serde(flatten)]
    pub site: SiteRecord,
    pub readiness: ReadinessReport,
}

impl From<SiteRecord> for SiteView {
    fn from(site: SiteRecord) -> Self {
        let readiness = readiness(&site);
        Self { site, readiness }
    }
}

async fn create_site(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let input: SiteInput = parse_json(&body)?;
    if let Some(b) = input.baseline_hours {
        BaselineHours::new(b.low, b.high).map_err(|e| ApiError::bad_request("invalid_site", e.to_string()))?;
    }
    let catalog = state.0.ws.catalog.clone();
    let (created, site) = blocking(move || {
        let record = SiteRecord::from(input);
        let before = catalog.sites().len();
        let id = catalog.register_site(record)?;
        Ok((catalog.sites().len() > before, catalog.site(&id)?))
    })
    .await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(SiteView::from(site))).into_response())
}

async fn list_sites(State(state): State<AppState>) -> Json<Vec<SiteView>> {
    Json(state.0.ws.catalog.sites().into_iter().map(SiteView::from).collect())
}

async fn get_site(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SiteView>, ApiError> {
    Ok(Json(state.0.ws.catalog.site(&id)?.into()))
}

async fn upload_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<(StatusCode, Json<AssetRef>), ApiError> {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request("invalid_multipart", e.body_text()))?;
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request("invalid_multipart", e.body_text());
    let mut file = None;
    let mut azimuth = None;
    let mut source = CaptureSource::LocalFile;
    let mut captured_at = None;
    while let Some(field) = multipart.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or_default().to_string();
        match name.as_str() {
            "file" => file = Some(field.bytes().await.map_err(bad)?),
            "azimuth_deg" => {
                let text = field.text().await.map_err(bad)?;
                let v: f64 = text
                    .trim()
                    .parse()
                    .map_err(|_| ApiError::bad_request("invalid_azimuth", format!("azimuth_deg {text:?} is not a number")))?;
                azimuth = Some(v);
            }
            "source" => {
                let text = field.text().await.map_err(bad)?;
                source = serde_json::from_value(serde_json::Value::String(text.trim().to_string()))
                    .map_err(|_| ApiError::bad_request("invalid_multipart", format!("unknown capture source {text:?}")))?;
            }
            "captured_at" => {
                let text = field.text().await.map_err(bad)?;
                let t = chrono::DateTime::parse_from_rfc3339(text.trim())
                    .map_err(|e| ApiError::bad_request("invalid_multipart", format!("captured_at: {e}")))?;
                captured_at = Some(t.with_timezone(&chrono::Utc));
            }
            other => {
                return Err(ApiError::bad_request("invalid_multipart", format!("unexpected field {other:?}")));
            }
        }
    }
    let file = file.ok_or_else(|| ApiError::bad_request("invalid_multipart", "missing `file` part"))?;
    let azimuth_deg = azimuth.ok_or_else(|| ApiError::bad_request("invalid_multipart", "missing `azimuth_deg` part"))?;
    let catalog = state.0.ws.catalog.clone();
    let asset = blocking(move || {
        let capture = Capture {
            azimuth_deg,
            source,
            captured_at,
        };
        Ok(catalog.ingest_image(&id, &file, capture)?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(asset)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileChoice {
    image: Option<String>,
    mesh: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobInput {
    site_id: String,
    template_id: Option<String>,
    #[serde(default)]
    profiles: ProfileChoice,
    #[serde(default)]
    auto_decimate: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

async fn create_job(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    let input: JobInput = parse_json(&body)?;
    let mut config = JobConfig {
        auto_decimate: input.auto_decimate,
        ..JobConfig::default()
    };
    if let Some(t) = input.template_id {
        config.template_id = t;
    }
    if let Some(p) = input.profiles.image {
        config.image_profile = p;
    }
    if let Some(p) = input.profiles.mesh {
        config.mesh_profile = p;
    }
    let orch = state.0.ws.orchestrator.clone();
    let site_id = input.site_id;
    let job_id = blocking(move || Ok(orch.submit_job(&site_id, config)?)).await?;
    state.spawn_job(job_id.clone());
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

async fn list_jobs(State(state): State<AppState>) -> Json<Vec<GenerationJob>> {
    let mut jobs = state.0.ws.orchestrator.jobs().list();
    jobs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.job_id.cmp(&b.job_id)));
    Json(jobs)
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<GenerationJob>, ApiError> {
    Ok(Json(state.0.ws.orchestrator.job_status(&id)?))
}

async fn retry_job(State(state): State<AppState>, Path(id): Path<String>) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    let orch = state.0.ws.orchestrator.clone();
    let job_id = id.clone();
    blocking(move || Ok(orch.reopen(&job_id)?)).await?;
    state.spawn_job(id.clone());
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id: id })))
}

fn asset_response(state: &AppState, asset: &AssetRef, headers: &HeaderMap) -> Result<Response, ApiError> {
    let etag = format!("\"{}\"", asset.asset_id);
    let cache = [(CACHE_CONTROL, HeaderValue::from_static("public, max-age=31536000, immutable"))];
    if headers
        .get(IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"))
    {
        return Ok((StatusCode::NOT_MODIFIED, [(ETAG, etag)], cache).into_response());
    }
    let bytes = state.0.ws.assets.get(&asset.asset_id)?;
    let mime = asset.media_type.mime();
    Ok(([(CONTENT_TYPE, mime.to_string()), (ETAG, etag)], cache, bytes).into_response())
}

async fn get_asset(
    State(state): State<AppState>,
    Path(asset_id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let asset = state.0.ws.assets.meta(&asset_id)?;
    asset_response(&state, &asset, &headers)
}

async fn get_model(
    State(state): State<AppState>,
    Path((job_id, file)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let job = state.0.ws.orchestrator.job_status(&job_id)?;
    let Some(published) = job.published else {
        return Err(ApiError::not_found(
            "model_not_found",
            format!("job {job_id} has not published a model (stage {})", job.stage),
        ));
    };
    let asset = match file.as_str() {
        "model.gltf" => published.gltf,
        "model.glb" => published.glb,
        "model.obj" => published.obj,
        other => return Err(ApiError::not_found("model_not_found", format!("no model file {other:?}"))),
    };
    debug_assert!(matches!(asset.media_type, MediaType::GltfJson | MediaType::Glb | MediaType::Obj));
    let state2 = state.clone();
    blocking(move || asset_response(&state2, &asset, &headers)).await
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    format: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsBody {
    pub rows: Vec<MetricsRow>,
    pub summary: Option<MetricsSummary>,
}

/// One row per finished job, oldest first.
pub fn job_metrics(ws: &Workspace) -> Vec<MetricsRow> {
    let mut jobs: Vec<_> = ws
        .orchestrator
        .jobs()
        .list()
        .into_iter()
        .filter(|j| j.stage == Stage::Done)
        .collect();
    jobs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.job_id.cmp(&b.job_id)));
    jobs.iter()
        .filter_map(|job| {
            let site = ws.catalog.site(&job.site_id).ok();
            let name = site.as_ref().map_or(job.site_id.as_str(), |s| s.name.as_str());
            job.metrics_row(name, site.as_ref().and_then(|s| s.baseline_hours))
        })
        .collect()
}

async fn get_metrics(
    State(state): State<AppState>,
    query: Result<Query<MetricsQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let rows = job_metrics(&state.0.ws);
    let summary = if rows.is_empty() { None } else { Some(aggregate(&rows)?) };
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(MetricsBody { rows, summary }).into_response()),
        "csv" => {
            let body = match &summary {
                Some(s) => emit_report(&rows, s, ReportFormat::Csv)?,
                None => b"site,t2d_s,t3d_s,total_s,sfm_low_hr,sfm_high_hr\n".to_vec(),
            };
            Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response())
        }
        other => Err(ApiError::bad_request("invalid_format", format!("format {other:?} is not csv or json"))),
    }
}

/// A server on its own thread and runtime, for tests, examples and embedding.
pub struct BackgroundServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(ws: Arc<Workspace>, bind: &str) -> std::io::Result<Self> {
        let bind = bind.to_string();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(&bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(std::io::Error::new(e.kind(), e.to_string())));
                        return Err(e);
                    }
                };
                let _ = addr_tx.send(listener.local_addr());
                serve(listener, ws, async {
                    let _ = stop_rx.await;
                })
                .await
            })
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| std::io::Error::other("server thread exited early"))??;
        Ok(Self {
            addr,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Graceful stop: running job stages complete before this returns.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| std::io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_and_errors() {
        let c = ServiceConfig::parse("# service\ndata_dir = /srv/heritage\nport = 9000\n").unwrap();
        assert_eq!(c.data_dir, PathBuf::from("/srv/heritage"));
        assert_eq!(c.port, 9000);
        assert_eq!(c.bind, "127.0.0.1");
        assert!(ServiceConfig::parse("port = x").is_err());
        assert!(ServiceConfig::parse("colour = blue").is_err());
        assert!(ServiceConfig::parse("port").is_err());
    }
}
