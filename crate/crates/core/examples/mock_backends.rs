//! Drives the mock 2D and 3D backends through the gateway on a manual clock,
//! including a flaky mesh backend that recovers after two refused calls.
//!
//! ```text
//! cargo run --example mock_backends
//! ```

use std::sync::Arc;
use std::time::Duration;

use heritage3d::assets::{AssetStore, MediaType};
use heritage3d::clock::ManualClock;
use heritage3d::fixtures;
use heritage3d::gateway::{BackendKind, BackendProfile, FailureKind, Gateway, RetryPolicy, SynthesisRequest};
use heritage3d::mesh::shapes::BuildingParams;
use heritage3d::prompt::{compile_prompt, PromptTemplate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let assets = Arc::new(AssetStore::open(dir.path())?);
    let clock = ManualClock::shared();
    let retry = RetryPolicy {
        max_attempts: 4,
        base_delay: Duration::from_millis(250),
        backoff_factor: 3.0,
        jitter_fraction: 0.0,
    };
    let gateway = Gateway::new(assets.clone(), clock.clone())
        .with_profile(
            BackendProfile::mock("slow-image", BackendKind::ImageSynthesis).with_delay(Duration::from_millis(10_200)),
        )?
        .with_profile(
            BackendProfile::mock("flaky-mesh", BackendKind::MeshGeneration)
                .with_delay(Duration::from_secs(34))
                .with_building(BuildingParams::dome_only(3))
                .with_failure(FailureKind::Unreachable, Some(2))
                .with_retry(retry),
        )?;

    let reference = assets.put(&fixtures::street_view_png(0), MediaType::Png)?;
    let prompt = compile_prompt("isometric", &PromptTemplate::default_isometric(), &fixtures::choto_sona_attributes())?;
    let request = SynthesisRequest::new(prompt, vec![reference]);

    let image = gateway.synthesize_isometric(&request, "slow-image")?;
    println!("2D  {}  {:?} in {} attempt(s)", image.asset.asset_id, image.latency, image.attempts);
    let again = gateway.synthesize_isometric(&request, "slow-image")?;
    println!("2D  same request, same asset: {}", again.asset == image.asset);

    let mesh = gateway.generate_mesh(&image.asset, "flaky-mesh")?;
    // refused calls return at once: 0.25 s + 0.75 s of backoff, then one 34 s call
    println!("3D  {} ({})  {:?} in {} attempt(s)", mesh.asset.asset_id, mesh.asset.media_type, mesh.latency, mesh.attempts);

    let err = gateway.generate_mesh(&image.asset, "slow-image").unwrap_err();
    println!("wrong kind: [{}] {err}", err.code());
    Ok(())
}
