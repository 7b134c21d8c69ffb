use std::time::Duration;

use super::*;
use crate::catalog::{Capture, CaptureSource};
use crate::clock::ManualClock;
use crate::fixtures;
use crate::gateway::{BackendProfile, FailureKind, MOCK_IMAGE_PROFILE, MOCK_MESH_PROFILE};
use crate::mesh::shapes::BuildingParams;
use crate::workspace::{Workspace, WorkspaceOptions};

struct Env {
    _dir: tempfile::TempDir,
    ws: Workspace,
    site_id: String,
}

fn env_with(profiles: Vec<BackendProfile>, images: &[f64]) -> Env {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open_with(
        dir.path(),
        ManualClock::shared(),
        WorkspaceOptions {
            profiles,
            transport: None,
        },
    )
    .unwrap();
    let site_id = ws.catalog.register_site(fixtures::choto_sona_site()).unwrap();
    for &az in images {
        ws.catalog
            .ingest_image(
                &site_id,
                &fixtures::street_view_png(az as u32),
                Capture::new(az, CaptureSource::StreetViewUrl),
            )
            .unwrap();
    }
    Env {
        _dir: dir,
        ws,
        site_id,
    }
}

fn small_mesh() -> BackendProfile {
    BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration).with_building(BuildingParams::dome_only(2))
}

fn env() -> Env {
    env_with(vec![small_mesh()], &[0.0, 120.0])
}

impl Env {
    fn orch(&self) -> &Orchestrator {
        &self.ws.orchestrator
    }

    fn submit(&self) -> String {
        self.orch().submit_job(&self.site_id, JobConfig::default()).unwrap()
    }
}

#[test]
fn single_transition() {
    let e = env();
    let id = e.submit();
    let job = e.orch().advance(&id, false).unwrap();
    assert_eq!(job.stage, Stage::Prompt);
    assert_eq!(job.timings.len(), 1);
    assert_eq!(job.images.len(), 2);
    assert_eq!(job.coverage_deg, Some(120.0));
}

#[test]
fn mock_run_is_done_with_five_timings() {
    let e = env();
    let id = e.submit();
    let job = e.orch().run_to_completion(&id).unwrap();
    assert_eq!(job.stage, Stage::Done);
    let stages: Vec<Stage> = job.timings.iter().map(|t| t.stage).collect();
    assert_eq!(stages, Stage::PIPELINE);
    assert!(job.iso_image.is_some() && job.mesh.is_some());
    let published = job.published.unwrap();
    let dir = e.ws.root().join(&published.dir);
    for f in ["model.gltf", "model.obj", "manifest.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(matches!(
        e.orch().advance(&id, false),
        Err(PipelineError::AlreadyTerminal { stage: Stage::Done, .. })
    ));
}

#[test]
fn configured_delays_reproduce_stage_times() {
    let e = env_with(
        vec![
            BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis).with_delay(Duration::from_millis(10_200)),
            small_mesh().with_delay(Duration::from_secs(34)),
        ],
        &[0.0, 120.0],
    );
    let job = e.orch().run_to_completion(&e.submit()).unwrap();
    assert_eq!(job.stage_s(Stage::Synthesize2D), Some(10.2));
    assert_eq!(job.stage_s(Stage::Generate3D), Some(34.0));
    let row = job.metrics_row("Ahsan Manzil Museum", None).unwrap();
    assert!((row.total - 44.2).abs() < 1e-9);
    assert!((job.total_s() - 44.2).abs() < 1e-9);
}

#[test]
fn failing_mesh_backend_leaves_four_timings_then_retry_completes() {
    let e = env_with(
        vec![small_mesh().with_failure(FailureKind::Rejected, Some(1))],
        &[0.0, 120.0],
    );
    let id = e.submit();
    let job = e.orch().run_to_completion(&id).unwrap();
    assert_eq!(job.stage, Stage::Failed);
    assert_eq!(job.failed_stage, Some(Stage::Generate3D));
    assert_eq!(job.timings.len(), 4);
    assert!(job.timings[3].is_failure());
    assert_eq!(job.error.as_ref().unwrap().code, "backend_rejected");
    assert!(job.iso_image.is_some() && job.mesh.is_none());

    assert!(matches!(e.orch().advance(&id, false), Err(PipelineError::AlreadyTerminal { .. })));
    let job = e.orch().advance(&id, true).unwrap();
    assert_eq!(job.stage, Stage::Publish);
    assert_eq!(job.failed_attempts.len(), 1);
    let job = e.orch().run_to_completion(&id).unwrap();
    assert_eq!(job.stage, Stage::Done);
    assert_eq!(job.timings.len(), 5);
    assert!(job.timings.iter().all(|t| !t.is_failure()));
}

#[test]
fn unreachable_image_backend_keeps_prior_timings() {
    let e = env_with(
        vec![BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis)
            .with_failure(FailureKind::Unreachable, None)],
        &[0.0],
    );
    let job = e.orch().run_to_completion(&e.submit()).unwrap();
    assert_eq!(job.stage, Stage::Failed);
    assert_eq!(job.timings.len(), 3);
    assert_eq!(job.error.unwrap().code, "backend_unreachable");
    assert!(job.prompt.is_some());
}

#[test]
fn submission_checks() {
    let e = env_with(vec![], &[]);
    assert!(matches!(
        e.orch().submit_job(&e.site_id, JobConfig::default()),
        Err(PipelineError::NoImages(_))
    ));
    let e = env();
    let err = e.orch().submit_job("nowhere", JobConfig::default()).unwrap_err();
    assert_eq!(err.code(), "site_not_found");
    let bad = JobConfig {
        image_profile: MOCK_MESH_PROFILE.into(),
        ..JobConfig::default()
    };
    assert!(e.orch().submit_job(&e.site_id, bad).is_err());
    assert_ne!(e.submit(), e.submit());
    assert!(e.orch().job_status("job-nope").is_err());
    assert!(matches!(e.orch().advance("job-nope", false), Err(PipelineError::UnknownJob(_))));
}

#[test]
fn low_coverage_is_advisory() {
    let e = env_with(vec![small_mesh()], &[10.0]);
    let job = e.orch().job_status(&e.submit()).unwrap();
    assert!(!job.readiness.coverage_ok);
    assert!(!job.readiness.issues.is_empty());
}

#[test]
fn auto_decimate_brings_mesh_into_budget() {
    let big = BuildingParams {
        subdivisions: 6,
        body_segments: Some([40, 40, 40]),
    };
    assert!(big.triangle_count() > 100_000);
    let e = env_with(
        vec![BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration).with_building(big)],
        &[0.0],
    );
    let config = JobConfig {
        auto_decimate: true,
        ..JobConfig::default()
    };
    let id = e.orch().submit_job(&e.site_id, config).unwrap();
    let job = e.orch().run_to_completion(&id).unwrap();
    let report = job.mesh_report.unwrap();
    assert_eq!(report.decimated_from, Some(big.triangle_count() as usize));
    assert!(report.triangle_count <= 100_000);
    assert!(job.source_mesh.is_some());
}

#[test]
fn reopen_replays_journal() {
    let e = env();
    let id = e.submit();
    e.orch().advance(&id, false).unwrap();
    e.orch().advance(&id, false).unwrap();
    let reopened = JobStore::open(e.ws.root().join("jobs")).unwrap();
    let job = reopened.get(&id).unwrap();
    assert_eq!(job, e.orch().job_status(&id).unwrap());
    assert_eq!(job.stage, Stage::Synthesize2D);
}

#[test]
fn torn_line_and_duplicate_events_are_harmless() {
    let e = env();
    let id = e.submit();
    let job = e.orch().advance(&id, false).unwrap();
    let journal = e.ws.root().join("jobs").join(&id).join("journal.ndjson");
    let text = std::fs::read_to_string(&journal).unwrap();
    let completed = text.lines().nth(1).unwrap().to_string();
    // duplicate the completion record, then a torn half-line
    let torn = &completed[..completed.len() / 2];
    std::fs::write(&journal, format!("{text}{completed}\n{torn}")).unwrap();

    let store = JobStore::open(e.ws.root().join("jobs")).unwrap();
    let replayed = store.get(&id).unwrap();
    assert_eq!(replayed.timings, job.timings);
    assert_eq!(replayed.stage, Stage::Prompt);
    let after = std::fs::read_to_string(&journal).unwrap();
    assert!(after.ends_with('\n'));
    assert_eq!(after.lines().count(), 3);
}
