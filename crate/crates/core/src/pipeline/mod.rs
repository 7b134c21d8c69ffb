//! Five-stage generation jobs: acquire, prompt, 2D synthesis, 3D generation
//! and publish, persisted through a per-job journal.

mod store;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::assets::{write_atomic, AssetError, AssetRef, MediaType};
use crate::catalog::{readiness, Catalog, CatalogError, ReadinessReport};
use crate::clock::SharedClock;
use crate::gateway::{BackendKind, Gateway, GatewayError, SynthesisRequest};
use crate::mesh::{self, Container, IssueCode, MeshError, TRIANGLE_BUDGET};
use crate::metrics::{BaselineHours, MetricsRow};
use crate::prompt::{compile_prompt, AttributeSet, CompileError, PromptText, TemplateStore, TemplateStoreError};

pub use store::{replay, JobStore, JournalEvent, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "acquire")]
    Acquire,
    #[serde(rename = "prompt")]
    Prompt,
    #[serde(rename = "synthesize_2d")]
    Synthesize2D,
    #[serde(rename = "generate_3d")]
    Generate3D,
    #[serde(rename = "publish")]
    Publish,
    #[serde(rename = "done")]
    Done,
    #[serde(rename = "failed")]
    Failed,
}

impl Stage {
    /// The five working stages in execution order.
    pub const PIPELINE: [Stage; 5] = [
        Stage::Acquire,
        Stage::Prompt,
        Stage::Synthesize2D,
        Stage::Generate3D,
        Stage::Publish,
    ];

    pub fn next(self) -> Stage {
        match self {
            Stage::Acquire => Stage::Prompt,
            Stage::Prompt => Stage::Synthesize2D,
            Stage::Synthesize2D => Stage::Generate3D,
            Stage::Generate3D => Stage::Publish,
            Stage::Publish | Stage::Done => Stage::Done,
            Stage::Failed => Stage::Failed,
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Done | Stage::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Acquire => "acquire",
            Stage::Prompt => "prompt",
            Stage::Synthesize2D => "synthesize_2d",
            Stage::Generate3D => "generate_3d",
            Stage::Publish => "publish",
            Stage::Done => "done",
            Stage::Failed => "failed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub elapsed_s: f64,
    pub started_at: DateTime<Utc>,
    pub outcome: StageOutcome,
}

impl StageTiming {
    pub fn is_failure(&self) -> bool {
        self.outcome == StageOutcome::Failed
    }

    fn finished_at(&self) -> DateTime<Utc> {
        let elapsed = chrono::Duration::from_std(Duration::from_secs_f64(self.elapsed_s)).unwrap_or_default();
        self.started_at + elapsed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

/// Which template and backends a job uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobConfig {
    pub template_id: String,
    pub image_profile: String,
    pub mesh_profile: String,
    /// Decimate meshes above the triangle budget instead of publishing them as is.
    pub auto_decimate: bool,
    pub decimate_target: usize,
    /// Cap on reference images sent to the 2D backend; `None` sends all.
    pub max_reference_images: Option<usize>,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            template_id: crate::prompt::DEFAULT_TEMPLATE_ID.into(),
            image_profile: crate::gateway::MOCK_IMAGE_PROFILE.into(),
            mesh_profile: crate::gateway::MOCK_MESH_PROFILE.into(),
            auto_decimate: false,
            decimate_target: *TRIANGLE_BUDGET.end(),
            max_reference_images: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub triangle_count: usize,
    pub budget_ok: bool,
    pub watertight: bool,
    pub warnings: Vec<IssueCode>,
    /// Triangle count before decimation, when it ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decimated_from: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedModel {
    /// Relative to the data directory.
    pub dir: String,
    pub gltf: AssetRef,
    pub glb: AssetRef,
    pub obj: AssetRef,
}

/// What a completed stage contributed to the job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage")]
pub enum StageOutput {
    #[serde(rename = "acquire")]
    Acquire {
        images: Vec<AssetRef>,
        coverage_deg: f64,
    },
    #[serde(rename = "prompt")]
    Prompt { prompt: PromptText },
    #[serde(rename = "synthesize_2d")]
    Synthesize2D {
        iso_image: AssetRef,
        latency_s: f64,
        attempts: u32,
    },
    #[serde(rename = "generate_3d")]
    Generate3D {
        mesh: AssetRef,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_mesh: Option<AssetRef>,
        report: MeshSummary,
        latency_s: f64,
        attempts: u32,
    },
    #[serde(rename = "publish")]
    Publish { published: PublishedModel },
}

impl StageOutput {
    fn apply(&self, job: &mut GenerationJob) {
        match self.clone() {
            StageOutput::Acquire { images, coverage_deg } => {
                job.images = images;
                job.coverage_deg = Some(coverage_deg);
            }
            StageOutput::Prompt { prompt } => job.prompt = Some(prompt),
            StageOutput::Synthesize2D { iso_image, .. } => job.iso_image = Some(iso_image),
            StageOutput::Generate3D {
                mesh,
                source_mesh,
                report,
                ..
            } => {
                job.mesh = Some(mesh);
                job.source_mesh = source_mesh;
                job.mesh_report = Some(report);
            }
            StageOutput::Publish { published } => job.published = Some(published),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: String,
    pub site_id: String,
    pub config: JobConfig,
    pub stage: Stage,
    /// Stage a failed job resumes from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    pub readiness: ReadinessReport,
    #[serde(default)]
    pub images: Vec<AssetRef>,
    #[serde(default)]
    pub coverage_deg: Option<f64>,
    #[serde(default)]
    pub prompt: Option<PromptText>,
    #[serde(default)]
    pub iso_image: Option<AssetRef>,
    #[serde(default)]
    pub mesh: Option<AssetRef>,
    /// The generator's original output when `mesh` is a decimated copy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_mesh: Option<AssetRef>,
    #[serde(default)]
    pub mesh_report: Option<MeshSummary>,
    #[serde(default)]
    pub published: Option<PublishedModel>,
    pub timings: Vec<StageTiming>,
    /// Timings of failed attempts that were later retried.
    #[serde(default)]
    pub failed_attempts: Vec<StageTiming>,
    #[serde(default)]
    pub error: Option<JobError>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl GenerationJob {
    /// Sum of recorded stage times.
    pub fn total_s(&self) -> f64 {
        self.timings.iter().map(|t| t.elapsed_s).sum()
    }

    pub fn stage_s(&self, stage: Stage) -> Option<f64> {
        self.timings
            .iter()
            .find(|t| t.stage == stage && !t.is_failure())
            .map(|t| t.elapsed_s)
    }

    /// 2D and 3D stage times as a report row; `None` until both stages completed.
    pub fn metrics_row(&self, site_name: &str, baseline: Option<BaselineHours>) -> Option<MetricsRow> {
        Some(MetricsRow::new(
            site_name,
            self.stage_s(Stage::Synthesize2D)?,
            self.stage_s(Stage::Generate3D)?,
            baseline,
        ))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("job {0} not found")]
    UnknownJob(String),
    #[error("job {job_id} is already {stage}")]
    AlreadyTerminal { job_id: String, stage: Stage },
    #[error("job {0} has not failed; nothing to retry")]
    NotFailed(String),
    #[error("site {0} has no ingested images")]
    NoImages(String),
    #[error("mesh stage produced no mesh")]
    MissingArtifact(&'static str),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Template(#[from] TemplateStoreError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Store(StoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => PipelineError::UnknownJob(id),
            other => PipelineError::Store(other),
        }
    }
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::UnknownJob(_) => "job_not_found",
            PipelineError::AlreadyTerminal { .. } => "job_terminal",
            PipelineError::NotFailed(_) => "job_not_failed",
            PipelineError::NoImages(_) => "site_has_no_images",
            PipelineError::MissingArtifact(_) => "missing_artifact",
            PipelineError::Catalog(CatalogError::UnknownSite(_)) => "site_not_found",
            PipelineError::Catalog(_) => "catalog_error",
            PipelineError::Template(TemplateStoreError::NotFound(_)) => "template_not_found",
            PipelineError::Template(_) => "invalid_template",
            PipelineError::Compile(_) => "missing_required_attribute",
            PipelineError::Gateway(g) => g.code(),
            PipelineError::Mesh(_) => "invalid_mesh",
            PipelineError::Asset(_) => "asset_error",
            PipelineError::Store(_) => "job_store_error",
            PipelineError::Io(_) => "io_error",
        }
    }
}

pub struct Orchestrator {
    catalog: Arc<Catalog>,
    templates: TemplateStore,
    gateway: Arc<Gateway>,
    jobs: JobStore,
    published_dir: PathBuf,
    clock: SharedClock,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Orchestrator {
    /// `published_dir` is the `published/` directory; its parent is the data root.
    pub fn new(
        catalog: Arc<Catalog>,
        templates: TemplateStore,
        gateway: Arc<Gateway>,
        jobs: JobStore,
        published_dir: impl Into<PathBuf>,
        clock: SharedClock,
    ) -> Self {
        Self {
            catalog,
            templates,
            gateway,
            jobs,
            published_dir: published_dir.into(),
            clock,
            locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateStore {
        &self.templates
    }

    pub fn jobs(&self) -> &JobStore {
        &self.jobs
    }

    pub fn published_dir(&self) -> &Path {
        &self.published_dir
    }

    /// Creates a job at `Acquire`. The site must have at least one image;
    /// low azimuthal coverage is recorded in the job's readiness report only.
    pub fn submit_job(&self, site_id: &str, config: JobConfig) -> Result<String, PipelineError> {
        let report = self.catalog.validate_site_ready(site_id)?;
        if !report.has_images {
            return Err(PipelineError::NoImages(site_id.to_string()));
        }
        self.templates.load(&config.template_id)?;
        for (name, kind) in [
            (&config.image_profile, BackendKind::ImageSynthesis),
            (&config.mesh_profile, BackendKind::MeshGeneration),
        ] {
            let profile = self
                .gateway
                .profile(name)
                .ok_or_else(|| GatewayError::UnknownProfile(name.clone()))?;
            if profile.kind != kind {
                return Err(GatewayError::WrongKind {
                    profile: name.clone(),
                    expected: kind,
                }
                .into());
            }
        }
        if !report.coverage_ok {
            tracing::warn!(site_id, coverage_deg = report.coverage_deg, "submitting job with low azimuthal coverage");
        }
        let now = self.clock.wall();
        let job = GenerationJob {
            job_id: new_job_id(now),
            site_id: site_id.to_string(),
            config,
            stage: Stage::Acquire,
            failed_stage: None,
            readiness: report,
            images: Vec::new(),
            coverage_deg: None,
            prompt: None,
            iso_image: None,
            mesh: None,
            source_mesh: None,
            mesh_report: None,
            published: None,
            timings: Vec::new(),
            failed_attempts: Vec::new(),
            error: None,
            created_at: now,
            updated_at: now,
        };
        Ok(self.jobs.create(job)?.job_id)
    }

    /// Runs exactly one stage. With `retry`, a failed job first returns to
    /// the stage that failed.
    pub fn advance(&self, job_id: &str, retry: bool) -> Result<GenerationJob, PipelineError> {
        let lock = self.job_lock(job_id);
        let _guard = lock.lock();
        let job = if retry {
            self.reopen_locked(job_id)?
        } else {
            self.jobs.get(job_id)?
        };
        if job.stage.is_terminal() {
            return Err(PipelineError::AlreadyTerminal {
                job_id: job_id.to_string(),
                stage: job.stage,
            });
        }

        let stage = job.stage;
        let started_at = self.clock.wall();
        let t0 = self.clock.monotonic();
        let result = self.run_stage(&job);
        let elapsed_s = self.clock.monotonic().saturating_sub(t0).as_secs_f64();
        let timing = |outcome| StageTiming {
            stage,
            elapsed_s,
            started_at,
            outcome,
        };
        let event = match result {
            Ok(output) => JournalEvent::StageCompleted {
                stage,
                timing: timing(StageOutcome::Completed),
                output: Box::new(output),
            },
            Err(e) => {
                tracing::warn!(job_id, %stage, error = %e, "stage failed");
                JournalEvent::StageFailed {
                    stage,
                    timing: timing(StageOutcome::Failed),
                    error: JobError {
                        code: e.code().to_string(),
                        message: e.to_string(),
                    },
                }
            }
        };
        Ok(self.jobs.append(job_id, event)?)
    }

    /// Returns a failed job to the stage that failed without running it.
    pub fn reopen(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        let lock = self.job_lock(job_id);
        let _guard = lock.lock();
        self.reopen_locked(job_id)
    }

    fn reopen_locked(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        let job = self.jobs.get(job_id)?;
        let Some(stage) = job.failed_stage.filter(|_| job.stage == Stage::Failed) else {
            return Err(PipelineError::NotFailed(job_id.to_string()));
        };
        Ok(self.jobs.append(
            job_id,
            JournalEvent::Retried {
                stage,
                at: self.clock.wall(),
            },
        )?)
    }

    pub fn run_to_completion(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        self.run_until(job_id, &AtomicBool::new(false))
    }

    /// Advances until the job is terminal or `stop` is set; a stage already
    /// running when `stop` is set still finishes and is recorded.
    pub fn run_until(&self, job_id: &str, stop: &AtomicBool) -> Result<GenerationJob, PipelineError> {
        let mut job = self.jobs.get(job_id)?;
        while !job.stage.is_terminal() && !stop.load(Ordering::SeqCst) {
            job = self.advance(job_id, false)?;
        }
        Ok(job)
    }

    /// Last persisted state; a stage in progress is not visible until it finishes.
    pub fn job_status(&self, job_id: &str) -> Result<GenerationJob, PipelineError> {
        Ok(self.jobs.get(job_id)?)
    }

    fn job_lock(&self, job_id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().entry(job_id.to_string()).or_default().clone()
    }

    fn run_stage(&self, job: &GenerationJob) -> Result<StageOutput, PipelineError> {
        match job.stage {
            Stage::Acquire => {
                let site = self.catalog.site(&job.site_id)?;
                let report = readiness(&site);
                if !report.has_images {
                    return Err(PipelineError::NoImages(job.site_id.clone()));
                }
                Ok(StageOutput::Acquire {
                    images: site.images.into_iter().map(|i| i.asset).collect(),
                    coverage_deg: report.coverage_deg,
                })
            }
            Stage::Prompt => {
                let site = self.catalog.site(&job.site_id)?;
                let template = self.templates.load(&job.config.template_id)?;
                let prompt = compile_prompt(&job.config.template_id, &template, &AttributeSet::from_site(&site))?;
                Ok(StageOutput::Prompt { prompt })
            }
            Stage::Synthesize2D => {
                let prompt = job.prompt.clone().ok_or(PipelineError::MissingArtifact("prompt"))?;
                let mut refs = job.images.clone();
                if let Some(n) = job.config.max_reference_images {
                    refs.truncate(n.max(1));
                }
                let out = self
                    .gateway
                    .synthesize_isometric(&SynthesisRequest::new(prompt, refs), &job.config.image_profile)?;
                Ok(StageOutput::Synthesize2D {
                    iso_image: out.asset,
                    latency_s: out.latency.as_secs_f64(),
                    attempts: out.attempts,
                })
            }
            Stage::Generate3D => {
                let iso = job.iso_image.as_ref().ok_or(PipelineError::MissingArtifact("iso_image"))?;
                let out = self.gateway.generate_mesh(iso, &job.config.mesh_profile)?;
                let assets = self.gateway.assets();
                let doc = mesh::parse_gltf(&assets.get(&out.asset.asset_id)?)?;
                let report = mesh::validate(&doc);
                let too_big = report.triangle_count > *TRIANGLE_BUDGET.end();
                let (mesh, source_mesh, report, decimated_from) = if too_big && job.config.auto_decimate {
                    let reduced = mesh::decimate(&doc, job.config.decimate_target)?;
                    let bytes = mesh::write_gltf(&reduced, Container::Glb)?;
                    let asset = assets.put(&bytes, MediaType::Glb)?;
                    (asset, Some(out.asset), mesh::validate(&reduced), Some(report.triangle_count))
                } else {
                    (out.asset, None, report, None)
                };
                Ok(StageOutput::Generate3D {
                    mesh,
                    source_mesh,
                    report: MeshSummary {
                        triangle_count: report.triangle_count,
                        budget_ok: report.budget_ok,
                        watertight: report.watertight,
                        warnings: report.warning_codes(),
                        decimated_from,
                    },
                    latency_s: out.latency.as_secs_f64(),
                    attempts: out.attempts,
                })
            }
            Stage::Publish => self.publish(job),
            Stage::Done | Stage::Failed => unreachable!("terminal stages are rejected before dispatch"),
        }
    }

    fn publish(&self, job: &GenerationJob) -> Result<StageOutput, PipelineError> {
        let mesh_ref = job.mesh.as_ref().ok_or(PipelineError::MissingArtifact("mesh"))?;
        let assets = self.gateway.assets();
        let source = assets.get(&mesh_ref.asset_id)?;
        let doc = mesh::parse_gltf(&source)?;
        let gltf_bytes = mesh::write_gltf(&doc, Container::Json)?;
        let glb = if mesh_ref.media_type == MediaType::Glb {
            mesh_ref.clone()
        } else {
            assets.put(&mesh::write_gltf(&doc, Container::Glb)?, MediaType::Glb)?
        };
        let obj_bytes = mesh::export_obj(&doc)?;
        let gltf = assets.put(&gltf_bytes, MediaType::GltfJson)?;
        let obj = assets.put(&obj_bytes, MediaType::Obj)?;

        let dir = self.published_dir.join(&job.site_id).join(&job.job_id);
        std::fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("model.gltf"), &gltf_bytes)?;
        write_atomic(&dir.join("model.obj"), &obj_bytes)?;
        let manifest = serde_json::json!({
            "job_id": job.job_id,
            "site_id": job.site_id,
            "assets": {
                "iso_image": job.iso_image,
                "mesh": mesh_ref,
                "source_mesh": job.source_mesh,
                "gltf": gltf,
                "glb": glb,
                "obj": obj,
            },
            "prompt_digest": job.prompt.as_ref().map(|p| &p.attr_digest),
            "template_id": job.prompt.as_ref().map(|p| &p.template_id),
            "triangle_count": doc.triangle_count(),
            "timings": job.timings,
        });
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &json)?;

        let root = self.published_dir.parent().unwrap_or(Path::new(""));
        let rel = dir.strip_prefix(root).unwrap_or(&dir);
        Ok(StageOutput::Publish {
            published: PublishedModel {
                dir: rel.to_string_lossy().replace('\\', "/"),
                gltf,
                glb,
                obj,
            },
        })
    }
}

fn new_job_id(now: DateTime<Utc>) -> String {
    format!("job-{}-{:08x}", now.format("%Y%m%d%H%M%S"), rand::random::<u32>())
}

#[cfg(test)]
mod tests;
