//! Runs the five-stage pipeline end to end against mock backends on a
//! virtual clock, so the configured 10.2 s and 34 s backend times are
//! recorded without being waited out.
//!
//! ```text
//! cargo run --example run_pipeline
//! ```

use std::time::Duration;

use heritage3d::catalog::{Capture, CaptureSource};
use heritage3d::clock::ManualClock;
use heritage3d::fixtures;
use heritage3d::gateway::{BackendKind, BackendProfile, MOCK_IMAGE_PROFILE, MOCK_MESH_PROFILE};
use heritage3d::metrics::{speedup, BaselineHours};
use heritage3d::pipeline::{JobConfig, Stage};
use heritage3d::workspace::{Workspace, WorkspaceOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let profiles = vec![
        BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis).with_delay(Duration::from_millis(10_200)),
        BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration).with_delay(Duration::from_secs(34)),
    ];
    let ws = Workspace::open_with(
        dir.path(),
        ManualClock::shared(),
        WorkspaceOptions {
            profiles,
            transport: None,
        },
    )?;

    let site_id = ws.catalog.register_site(fixtures::choto_sona_site())?;
    for (i, az) in [0.0, 90.0, 180.0, 270.0].into_iter().enumerate() {
        ws.catalog.ingest_image(
            &site_id,
            &fixtures::street_view_png(i as u32),
            Capture::new(az, CaptureSource::StreetViewUrl),
        )?;
    }

    let config = JobConfig {
        auto_decimate: true,
        ..JobConfig::default()
    };
    let job_id = ws.orchestrator.submit_job(&site_id, config)?;
    let job = ws.orchestrator.run_to_completion(&job_id)?;
    assert_eq!(job.stage, Stage::Done);

    println!("job {job_id}");
    for t in &job.timings {
        println!("  {:<14} {:>6.1} s", t.stage.as_str(), t.elapsed_s);
    }
    if let Some(report) = &job.mesh_report {
        println!(
            "  mesh {} triangles (from {:?}), watertight {}",
            report.triangle_count, report.decimated_from, report.watertight
        );
    }
    let published = job.published.as_ref().expect("done jobs are published");
    println!("  published {}", ws.root().join(&published.dir).display());

    let row = job.metrics_row("Choto Sona Mosque", None).expect("both backend stages ran");
    let (low, high) = speedup(row.total, BaselineHours::new(4.0, 6.0)?)?;
    println!("2D + 3D = {:.1} + {:.1} = {:.1} s, {:.0}x to {:.0}x faster than 4-6 h", row.t2d, row.t3d, row.total, low, high);
    Ok(())
}
