//! Registers a site and watches azimuthal coverage grow as views arrive.
//!
//! ```text
//! cargo run --example catalog_coverage
//! ```

use std::sync::Arc;

use heritage3d::assets::AssetStore;
use heritage3d::catalog::{azimuthal_coverage, Capture, CaptureSource, Catalog, MIN_COVERAGE_DEG};
use heritage3d::fixtures;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let assets = Arc::new(AssetStore::open(dir.path().join("assets"))?);
    let catalog = Catalog::open(dir.path().join("catalog"), assets)?;
    let site_id = catalog.register_site(fixtures::choto_sona_site())?;
    println!("registered {site_id}");

    for (i, az) in [350.0, 20.0, 80.0, 200.0].into_iter().enumerate() {
        let png = fixtures::street_view_png(i as u32);
        let asset = catalog.ingest_image(&site_id, &png, Capture::new(az, CaptureSource::StreetViewUrl))?;
        let report = catalog.validate_site_ready(&site_id)?;
        println!(
            "+ {az:>5.1} deg  {}  coverage {:>5.1} deg{}",
            &asset.asset_id[..12],
            report.coverage_deg,
            if report.coverage_ok { "" } else { "  (low)" },
        );
    }

    // the arc wraps through north: 350 and 20 are 30 degrees apart
    assert_eq!(azimuthal_coverage(&[350.0, 20.0]), 30.0);
    println!("threshold {MIN_COVERAGE_DEG} deg; out-of-range azimuths are rejected:");
    let err = catalog
        .ingest_image(&site_id, &fixtures::street_view_png(9), Capture::new(360.0, CaptureSource::LocalFile))
        .unwrap_err();
    println!("  {err}");
    Ok(())
}
