//! Starts the HTTP service on an ephemeral port and walks the API a client
//! would use: create a site, upload views, run a job, fetch the model.
//!
//! ```text
//! cargo run --example serve_api
//! ```

use std::sync::Arc;
use std::time::{Duration, Instant};

use heritage3d::clock::SystemClock;
use heritage3d::fixtures;
use heritage3d::service::BackgroundServer;
use heritage3d::workspace::Workspace;
use reqwest::blocking::multipart::{Form, Part};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ws = Arc::new(Workspace::open(dir.path(), SystemClock::shared())?);
    let server = BackgroundServer::start(ws, "127.0.0.1:0")?;
    let http = reqwest::blocking::Client::new();
    println!("listening on {}", server.addr());

    let site: Value = http
        .post(server.url("/sites"))
        .json(&json!({
            "name": "Choto Sona Mosque",
            "site_type": "Mosque",
            "material": "Sandstone and brick",
            "features": ["fifteen domes", "terracotta ornamentation"],
            "baseline_hours": {"low": 4.0, "high": 6.0},
        }))
        .send()?
        .error_for_status()?
        .json()?;
    let site_id = site["site_id"].as_str().ok_or("no site_id")?.to_string();
    println!("POST /sites -> {site_id}");

    for (i, az) in [0, 120, 240].into_iter().enumerate() {
        let form = Form::new()
            .text("azimuth_deg", az.to_string())
            .text("source", "street_view_url")
            .part("file", Part::bytes(fixtures::street_view_png(i as u32)).file_name("view.png"));
        let asset: Value = http
            .post(server.url(&format!("/sites/{site_id}/images")))
            .multipart(form)
            .send()?
            .error_for_status()?
            .json()?;
        println!("POST /sites/{site_id}/images -> {}", asset["asset_id"]);
    }

    let accepted: Value = http
        .post(server.url("/jobs"))
        .json(&json!({"site_id": site_id, "auto_decimate": true}))
        .send()?
        .error_for_status()?
        .json()?;
    let job_id = accepted["job_id"].as_str().ok_or("no job_id")?.to_string();
    println!("POST /jobs -> {job_id}");

    let deadline = Instant::now() + Duration::from_secs(30);
    let job = loop {
        let job: Value = http.get(server.url(&format!("/jobs/{job_id}"))).send()?.json()?;
        if matches!(job["stage"].as_str(), Some("done" | "failed")) || Instant::now() > deadline {
            break job;
        }
        std::thread::sleep(Duration::from_millis(50));
    };
    println!("GET /jobs/{job_id} -> {}", job["stage"]);

    let glb = http.get(server.url(&format!("/models/{job_id}/model.glb"))).send()?.error_for_status()?;
    let etag = glb.headers().get("etag").cloned();
    println!("GET /models/{job_id}/model.glb -> {} bytes, etag {:?}", glb.bytes()?.len(), etag);

    let csv = http.get(server.url("/metrics?format=csv")).send()?.text()?;
    println!("GET /metrics?format=csv\n{csv}");

    server.shutdown()?;
    Ok(())
}
