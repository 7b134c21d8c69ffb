//! Job persistence: `jobs/<job_id>/journal.ndjson` is the source of truth,
//! `snapshot.json` its materialized state.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{GenerationJob, JobError, Stage, StageOutput, StageTiming};
use crate::assets::write_atomic;

const JOURNAL: &str = "journal.ndjson";
const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("journal {path}, line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("job {0} already exists")]
    Exists(String),
    #[error("job {0} not found")]
    NotFound(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    Submitted {
        job: Box<GenerationJob>,
    },
    StageCompleted {
        stage: Stage,
        timing: StageTiming,
        output: Box<StageOutput>,
    },
    StageFailed {
        stage: Stage,
        timing: StageTiming,
        error: JobError,
    },
    Retried {
        stage: Stage,
        at: DateTime<Utc>,
    },
}

impl JournalEvent {
    /// Applies the event. Events that do not match the job's current stage
    /// (a replayed duplicate, for instance) leave it untouched and return false.
    pub fn apply(&self, job: &mut GenerationJob) -> bool {
        match self {
            JournalEvent::Submitted { .. } => false,
            JournalEvent::StageCompleted { stage, timing, output } => {
                if job.stage != *stage {
                    return false;
                }
                output.apply(job);
                job.timings.push(timing.clone());
                job.stage = stage.next();
                job.updated_at = timing.finished_at();
                true
            }
            JournalEvent::StageFailed { stage, timing, error } => {
                if job.stage != *stage {
                    return false;
                }
                job.timings.push(timing.clone());
                job.failed_stage = Some(*stage);
                job.stage = Stage::Failed;
                job.error = Some(error.clone());
                job.updated_at = timing.finished_at();
                true
            }
            JournalEvent::Retried { stage, at } => {
                if job.stage != Stage::Failed || job.failed_stage != Some(*stage) {
                    return false;
                }
                let (failed, kept): (Vec<_>, Vec<_>) = job.timings.drain(..).partition(StageTiming::is_failure);
                job.timings = kept;
                job.failed_attempts.extend(failed);
                job.stage = *stage;
                job.failed_stage = None;
                job.error = None;
                job.updated_at = *at;
                true
            }
        }
    }
}

/// Replays journal text. A trailing line without its newline is a torn
/// write and is reported as the byte length of the intact prefix.
pub fn replay(path: &Path, text: &str) -> Result<(GenerationJob, usize), StoreError> {
    let intact = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    let corrupt = |line: usize, reason: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut job: Option<GenerationJob> = None;
    for (i, line) in text[..intact].lines().enumerate() {
        let event: JournalEvent = serde_json::from_str(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        match (&mut job, event) {
            (None, JournalEvent::Submitted { job: j }) => job = Some(*j),
            (None, _) => return Err(corrupt(i + 1, "first event must be `submitted`".into())),
            (Some(_), JournalEvent::Submitted { .. }) => {
                return Err(corrupt(i + 1, "duplicate `submitted` event".into()))
            }
            (Some(j), event) => {
                if !event.apply(j) {
                    tracing::warn!(path = %path.display(), line = i + 1, "skipping journal event that does not match job stage");
                }
            }
        }
    }
    let job = job.ok_or_else(|| corrupt(0, "journal has no complete events".into()))?;
    Ok((job, intact))
}

/// Job registry. Reads come from memory; writers are serialized.
#[derive(Debug)]
pub struct JobStore {
    dir: PathBuf,
    jobs: RwLock<BTreeMap<String, GenerationJob>>,
    writer: Mutex<()>,
}

impl JobStore {
    /// Opens `dir` (the `jobs/` directory), replaying every journal. Torn
    /// trailing lines are truncated and stale snapshots rewritten.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut jobs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let job_dir = entry?.path();
            let journal = job_dir.join(JOURNAL);
            if !journal.is_file() {
                continue;
            }
            let text = fs::read_to_string(&journal)?;
            let (job, intact) = match replay(&journal, &text) {
                Ok(r) => r,
                // crashed before the first event was complete
                Err(StoreError::Corrupt { line: 0, .. }) => {
                    tracing::warn!(path = %journal.display(), "removing job with empty journal");
                    fs::remove_dir_all(&job_dir)?;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if intact < text.len() {
                tracing::warn!(path = %journal.display(), "truncating torn journal line");
                OpenOptions::new().write(true).open(&journal)?.set_len(intact as u64)?;
            }
            write_snapshot(&job_dir, &job)?;
            jobs.insert(job.job_id.clone(), job);
        }
        Ok(Self {
            dir,
            jobs: RwLock::new(jobs),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn job_dir(&self, job_id: &str) -> PathBuf {
        self.dir.join(job_id)
    }

    pub fn create(&self, job: GenerationJob) -> Result<GenerationJob, StoreError> {
        let _guard = self.writer.lock();
        let job_dir = self.job_dir(&job.job_id);
        if self.jobs.read().contains_key(&job.job_id) || job_dir.exists() {
            return Err(StoreError::Exists(job.job_id));
        }
        fs::create_dir_all(&job_dir)?;
        append_line(&job_dir, &JournalEvent::Submitted { job: Box::new(job.clone()) })?;
        write_snapshot(&job_dir, &job)?;
        self.jobs.write().insert(job.job_id.clone(), job.clone());
        Ok(job)
    }

    /// Journals `event`, then applies it to the cached job and refreshes the snapshot.
    pub fn append(&self, job_id: &str, event: JournalEvent) -> Result<GenerationJob, StoreError> {
        let _guard = self.writer.lock();
        let mut job = self.get(job_id)?;
        if !event.apply(&mut job) {
            // nothing to record; keep the journal free of no-op events
            return Ok(job);
        }
        let job_dir = self.job_dir(job_id);
        append_line(&job_dir, &event)?;
        write_snapshot(&job_dir, &job)?;
        self.jobs.write().insert(job_id.to_string(), job.clone());
        Ok(job)
    }

    pub fn get(&self, job_id: &str) -> Result<GenerationJob, StoreError> {
        self.jobs
            .read()
            .get(job_id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(job_id.to_string()))
    }

    pub fn list(&self) -> Vec<GenerationJob> {
        self.jobs.read().values().cloned().collect()
    }
}

fn append_line(job_dir: &Path, event: &JournalEvent) -> io::Result<()> {
    let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
    line.push(b'\n');
    let mut file = OpenOptions::new().create(true).append(true).open(job_dir.join(JOURNAL))?;
    file.write_all(&line)?;
    file.sync_data()
}

fn write_snapshot(job_dir: &Path, job: &GenerationJob) -> io::Result<()> {
    let mut json = serde_json::to_vec_pretty(job).map_err(io::Error::other)?;
    json.push(b'\n');
    write_atomic(&job_dir.join(SNAPSHOT), &json)
}
