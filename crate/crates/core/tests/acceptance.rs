//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS or FAIL line; the process exits non-zero if any fail.
//!
//! `cargo test --test acceptance`

mod common;

use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Stdio;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use heritage3d::catalog::azimuthal_coverage;
use heritage3d::clock::SystemClock;
use heritage3d::fixtures;
use heritage3d::gateway::{with_retry, BackendKind, BackendProfile, CallError, FailureKind, RetryPolicy};
use heritage3d::mesh::{
    self, bounding_box, decimate_with_stats, is_watertight, parse_gltf, parse_obj, shapes, validate, world_geometry,
    write_gltf, Container,
};
use heritage3d::metrics::{aggregate, load_rows_csv, speedup, BaselineHours};
use heritage3d::pipeline::{GenerationJob, Stage};
use heritage3d::prompt::{compile_prompt, PromptTemplate, DEFAULT_TEMPLATE_ID};
use heritage3d::service::BackgroundServer;
use heritage3d::workspace::{Workspace, WorkspaceOptions};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("end-to-end mock pipeline", end_to_end_mock_pipeline),
        ("timing table reproduction", timing_table),
        ("speedup claim", speedup_claim),
        ("glTF round-trip properties", gltf_round_trip),
        ("mesh invariants", mesh_invariants),
        ("prompt golden", prompt_golden),
        ("azimuth properties", azimuth_properties),
        ("retry contract", retry_contract),
        ("crash recovery", crash_recovery),
        ("HTTP contract", http_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2} s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn end_to_end_mock_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path();
    let site = common::seed_fixture_site(data)?;

    let started = Instant::now();
    let out = common::run_cli(data, &["job", "run", "--site", &site, "--mock"]);
    let wall = started.elapsed();
    let text = common::stdout(&out);
    ensure!(out.status.success(), "exit {:?}: {}{}", out.status.code(), text, String::from_utf8_lossy(&out.stderr));
    ensure!(wall < Duration::from_secs(5), "took {wall:?}");
    let job_id = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("job "))
        .ok_or("first line is not the job id")?
        .to_string();
    for stage in Stage::PIPELINE {
        ensure!(
            text.lines().any(|l| l.trim_start().starts_with(stage.as_str()) && l.trim_end().ends_with(" s")),
            "no timing line for {stage}:\n{text}"
        );
    }

    let status = common::run_cli(data, &["job", "status", &job_id, "--json"]);
    let job: GenerationJob = serde_json::from_slice(&status.stdout).map_err(|e| e.to_string())?;
    ensure!(job.stage == Stage::Done, "stage {}", job.stage);
    ensure!(job.timings.len() == 5, "{} timings", job.timings.len());
    let published = job.published.ok_or("nothing published")?;
    let model_dir = data.join(&published.dir);

    let doc = parse_gltf(&std::fs::read(model_dir.join("model.gltf")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let report = validate(&doc);
    ensure!(report.errors.is_empty(), "validate errors: {:?}", report.errors);

    let obj = parse_obj(&std::fs::read(model_dir.join("model.obj")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let geo = world_geometry(&doc);
    ensure!(obj.faces.len() == geo.triangles.len(), "OBJ faces {} vs glTF triangles {}", obj.faces.len(), geo.triangles.len());
    for (face, tri) in obj.faces.iter().zip(&geo.triangles) {
        for k in 0..3 {
            let (a, b) = (obj.positions[face[k]], geo.positions[tri[k]]);
            let err = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
            ensure!(err <= 1e-5 * (1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max)), "OBJ corner {a:?} vs {b:?}");
        }
    }
    Ok(format!(
        "job run in {:.2} s wall, {} triangles, validate clean, OBJ reparsed with {} faces",
        wall.as_secs_f64(),
        report.triangle_count,
        obj.faces.len()
    ))
}

fn timing_table() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/metrics.csv");
    let rows = load_rows_csv(std::fs::File::open(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure!(rows.len() == 8, "{} rows", rows.len());
    for r in &rows {
        ensure!(r.total == r.t2d + r.t3d, "{}: {} != {} + {}", r.site_name, r.total, r.t2d, r.t3d);
    }
    let s = aggregate(&rows).map_err(|e| e.to_string())?;
    // printed averages, and the exact column mean for the total
    for (label, got, want) in [("2D", s.mean_t2d, 10.9), ("3D", s.mean_t3d, 33.6), ("Total", s.mean_total, 44.56)] {
        ensure!((got - want).abs() <= 0.1, "{label} mean {got} not within 0.1 of {want}");
    }
    Ok(format!("means 2D {:.4}, 3D {:.4}, total {:.4}; all totals exact", s.mean_t2d, s.mean_t3d, s.mean_total))
}

fn speedup_claim() -> Outcome {
    let (low, high) = speedup(44.5, BaselineHours::new(4.0, 6.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let oracle = 4.0 * 60.0 * 60.0 / 44.5;
    ensure!(low >= 250.0, "low speedup {low} below 250");
    ensure!((low - 323.6).abs() <= 0.1, "low speedup {low} not 323.6 +- 0.1");
    ensure!((low - oracle).abs() < 1e-9, "low speedup {low} vs hand value {oracle}");
    Ok(format!("{low:.1}x to {high:.1}x"))
}

fn gltf_round_trip() -> Outcome {
    let seen = AtomicU32::new(0);
    runner(200)
        .run(&common::gltf_document(), |doc| {
            seen.fetch_add(1, Ordering::Relaxed);
            for container in [Container::Json, Container::Glb] {
                let bytes = write_gltf(&doc, container).map_err(|e| TestCaseError::fail(e.to_string()))?;
                let back = parse_gltf(&bytes).map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(&back, &doc);
                let again = write_gltf(&doc, container).map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert!(again == bytes, "second write differs");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let seen = seen.into_inner();
    ensure!(seen >= 200, "only {seen} documents generated");
    Ok(format!("{seen} documents, JSON and GLB, identical re-writes"))
}

fn mesh_invariants() -> Outcome {
    let cube = shapes::unit_cube();
    ensure!(cube.triangle_count() == 12, "cube has {} triangles", cube.triangle_count());
    ensure!(is_watertight(&cube), "cube not watertight");
    let bb = bounding_box(&cube).map_err(|e| e.to_string())?;
    ensure!(bb.min == [0.0; 3] && bb.max == [1.0; 3], "cube bbox {bb:?}");

    let mut open = cube.clone();
    open.meshes[0].primitives[0].indices.truncate(30);
    ensure!(open.triangle_count() == 10 && !is_watertight(&open), "cube minus a face still watertight");

    for s in 0..=3u32 {
        let n = shapes::icosphere(s).triangle_count();
        ensure!(n == 20 * 4usize.pow(s), "icosphere s={s}: {n}");
    }

    let sphere = shapes::icosphere(3);
    let (out, stats) = decimate_with_stats(&sphere, 400).map_err(|e| e.to_string())?;
    let stats = stats.ok_or("decimation was a no-op")?;
    ensure!(out.triangle_count() <= 400, "decimated to {}", out.triangle_count());
    let (before, after) = (bounding_box(&sphere).map_err(|e| e.to_string())?, bounding_box(&out).map_err(|e| e.to_string())?);
    ensure!(before.expanded(stats.cell_size).contains(&after), "decimated bbox {after:?} escapes {before:?}");
    Ok(format!(
        "cube 12/watertight, open cube leaks, icosphere 20..5120, decimate 1280 -> {} (cell {:.3})",
        out.triangle_count(),
        stats.cell_size
    ))
}

fn prompt_golden() -> Outcome {
    let golden = include_str!("golden/isometric_choto_sona.txt");
    let attrs = fixtures::choto_sona_attributes();
    let compile = || compile_prompt(DEFAULT_TEMPLATE_ID, &PromptTemplate::default_isometric(), &attrs);
    let a = compile().map_err(|e| e.to_string())?;
    let b = compile().map_err(|e| e.to_string())?;
    ensure!(a.text.as_bytes() == b.text.as_bytes(), "two compilations differ");
    ensure!(a == b, "digests differ");
    for phrase in ["45° top-down isometric camera angle", "clean, neutral background"] {
        ensure!(a.text.contains(phrase), "missing {phrase:?}");
    }
    ensure!(a.text == golden, "differs from golden:\n{}", a.text);
    Ok(format!("{} bytes, matches golden", a.text.len()))
}

fn azimuth_properties() -> Outcome {
    ensure!(azimuthal_coverage(&[350.0, 80.0]) == 90.0, "[350, 80] -> {}", azimuthal_coverage(&[350.0, 80.0]));
    let sets = (proptest::collection::vec(0.0f64..360.0, 0..12), -720.0f64..720.0, 0.0f64..360.0, any::<prop::sample::Index>());
    runner(1000)
        .run(&sets, |(az, r, extra, rot)| {
            let base = azimuthal_coverage(&az);
            let rotated: Vec<f64> = az.iter().map(|a| (a + r).rem_euclid(360.0)).collect();
            prop_assert!((azimuthal_coverage(&rotated) - base).abs() < 1e-9, "rotation");
            let mut turned = az.clone();
            if !turned.is_empty() {
                turned.rotate_left(rot.index(az.len()));
                turned.reverse();
            }
            prop_assert_eq!(azimuthal_coverage(&turned), base, "permutation");
            let mut more = az.clone();
            more.push(extra);
            prop_assert!(azimuthal_coverage(&more) + 1e-9 >= base, "monotonicity");
            prop_assert!((base - common::coverage_oracle(&az)).abs() < 1e-9, "oracle");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 sets: rotation, permutation, monotonicity; [350, 80] = 90".into())
}

fn retry_contract() -> Outcome {
    let failures = prop_oneof![
        Just(CallError::Timeout),
        Just(CallError::Connect("refused".into())),
        (500u16..600).prop_map(|code| CallError::Status { code, body: String::new() }),
    ];
    let case = (1u32..8, 0.0f64..=0.5, proptest::collection::vec(proptest::option::of(failures), 0..12));
    runner(500)
        .run(&case, |(max, jitter, script)| {
            let policy = RetryPolicy {
                max_attempts: max,
                base_delay: Duration::from_millis(20),
                backoff_factor: 2.0,
                jitter_fraction: jitter,
            };
            let mut calls = 0u32;
            let result = with_retry(&policy, |_| {}, |n| {
                calls += 1;
                match script.get(n as usize - 1) {
                    Some(Some(e)) => Err(e.clone()),
                    Some(None) => Ok(()),
                    None => Err(CallError::Timeout),
                }
            });
            prop_assert!(calls <= max, "{calls} calls, max {max}");
            if let Ok((_, n)) = result {
                prop_assert_eq!(n, calls);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let policy = RetryPolicy {
        max_attempts: 6,
        base_delay: Duration::from_millis(250),
        backoff_factor: 3.0,
        jitter_fraction: 0.0,
    };
    let mut waits = Vec::new();
    let _ = with_retry(&policy, |d| waits.push(d), |_| Err::<(), _>(CallError::Timeout));
    let formula: Vec<Duration> = (1..6u32).map(|n| Duration::from_millis(250 * 3u64.pow(n - 1))).collect();
    ensure!(waits == formula, "schedule {waits:?} != {formula:?}");
    Ok(format!("500 failure scripts within max_attempts; zero-jitter waits {:?}", waits))
}

fn crash_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path();
    let site = common::seed_fixture_site(data)?;

    // real clock: the 3D stage sleeps long enough to be killed in the middle
    let mut child = common::bin()
        .arg("--data-dir")
        .arg(data)
        .args(["job", "run", "--site", &site, "--mock", "--mock-delay-3d", "30"])
        .env_remove("HERITAGE3D_DATA_DIR")
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut first = String::new();
    BufReader::new(child.stdout.take().ok_or("no stdout")?)
        .read_line(&mut first)
        .map_err(|e| e.to_string())?;
    let job_id = first.trim().strip_prefix("job ").ok_or(format!("unexpected {first:?}"))?.to_string();
    let journal = data.join("jobs").join(&job_id).join("journal.ndjson");

    let deadline = Instant::now() + Duration::from_secs(20);
    while !common::journal_histogram(&journal).contains_key("stage_completed:synthesize_2d") {
        ensure!(Instant::now() < deadline, "job never reached the 3D stage");
        std::thread::sleep(Duration::from_millis(20));
    }
    std::thread::sleep(Duration::from_millis(200));
    child.kill().map_err(|e| e.to_string())?;
    let _ = child.wait();
    let before_text = std::fs::read_to_string(&journal).map_err(|e| e.to_string())?;
    let before = common::journal_histogram(&journal);
    ensure!(!before.contains_key("stage_completed:generate_3d"), "3D stage finished before the kill");

    // a write torn by the crash must not poison recovery
    std::fs::write(&journal, format!("{before_text}{{\"event\":\"stage_comp")).map_err(|e| e.to_string())?;

    let out = common::run_cli(data, &["job", "resume", &job_id]);
    ensure!(out.status.success(), "resume failed: {}", String::from_utf8_lossy(&out.stderr));
    let status = common::run_cli(data, &["job", "status", &job_id, "--json"]);
    let job: GenerationJob = serde_json::from_slice(&status.stdout).map_err(|e| e.to_string())?;
    ensure!(job.stage == Stage::Done, "stage {}", job.stage);
    let stages: Vec<Stage> = job.timings.iter().map(|t| t.stage).collect();
    ensure!(stages == Stage::PIPELINE, "timings {stages:?}");

    let after_text = std::fs::read_to_string(&journal).map_err(|e| e.to_string())?;
    ensure!(after_text.starts_with(&before_text), "journal prefix rewritten");
    let after = common::journal_histogram(&journal);
    for stage in Stage::PIPELINE {
        let n = after.get(&format!("stage_completed:{stage}")).copied().unwrap_or(0);
        ensure!(n == 1, "{n} completions of {stage}");
    }
    Ok(format!(
        "killed during generate_3d after {} journal lines; resumed to done with 5 distinct timings",
        before_text.lines().count()
    ))
}

fn http_contract() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let options = WorkspaceOptions {
        profiles: vec![
            BackendProfile::mock("flaky-mesh", BackendKind::MeshGeneration)
                .with_failure(FailureKind::Rejected, Some(1))
                .with_retry(RetryPolicy::none()),
        ],
        transport: None,
    };
    let ws = Arc::new(Workspace::open_with(dir.path(), SystemClock::shared(), options).map_err(|e| e.to_string())?);
    let server = BackgroundServer::start(ws, "127.0.0.1:0").map_err(|e| e.to_string())?;
    let http = reqwest::blocking::Client::new();
    let url = |p: &str| server.url(p);
    let mut checked = Vec::new();

    let r = http.get(url("/health")).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 200, "health {}", r.status());
    ensure!(r.json::<Value>().map_err(|e| e.to_string())? == json!({"status": "ok"}), "health body");
    checked.push("GET /health");

    let site = fixtures::choto_sona_site();
    let body = json!({
        "name": site.name, "site_type": site.site_type, "material": site.material,
        "features": site.features, "location": site.location,
        "baseline_hours": {"low": 4.0, "high": 6.0},
    });
    let r = http.post(url("/sites")).json(&body).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 201, "create site {}", r.status());
    let created: Value = r.json().map_err(|e| e.to_string())?;
    let site_id = created["site_id"].as_str().ok_or("no site_id")?.to_string();
    ensure!(created["readiness"]["has_images"] == json!(false), "readiness {created}");
    let r = http.post(url("/sites")).json(&body).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 200, "repeat create {}", r.status());
    api_error(http.post(url("/sites")).body("{").send(), 400, "invalid_json")?;
    checked.push("POST /sites");

    let r = http.get(url("/sites")).send().map_err(|e| e.to_string())?;
    let list: Vec<Value> = r.json().map_err(|e| e.to_string())?;
    ensure!(list.len() == 1 && list[0]["site_id"] == json!(site_id), "site list {list:?}");
    let r = http.get(url(&format!("/sites/{site_id}"))).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 200, "get site {}", r.status());
    api_error(http.get(url("/sites/nowhere")).send(), 404, "site_not_found")?;
    checked.push("GET /sites, /sites/{id}");

    let mut uploaded = Vec::new();
    for (i, az) in [0.0, 120.0, 240.0].into_iter().enumerate() {
        let bytes = fixtures::street_view_png(i as u32);
        let form = reqwest::blocking::multipart::Form::new()
            .part("file", reqwest::blocking::multipart::Part::bytes(bytes.clone()).file_name("v.png"))
            .text("azimuth_deg", az.to_string());
        let r = http
            .post(url(&format!("/sites/{site_id}/images")))
            .multipart(form)
            .send()
            .map_err(|e| e.to_string())?;
        ensure!(r.status() == 201, "upload {}", r.status());
        let asset: Value = r.json().map_err(|e| e.to_string())?;
        uploaded.push((asset["asset_id"].as_str().ok_or("no asset_id")?.to_string(), bytes));
    }
    let form = reqwest::blocking::multipart::Form::new()
        .part("file", reqwest::blocking::multipart::Part::bytes(fixtures::street_view_png(9)))
        .text("azimuth_deg", "400");
    api_error(http.post(url(&format!("/sites/{site_id}/images"))).multipart(form).send(), 400, "invalid_azimuth")?;
    checked.push("POST /sites/{id}/images");

    for (asset_id, bytes) in &uploaded {
        let r = http.get(url(&format!("/assets/{asset_id}"))).send().map_err(|e| e.to_string())?;
        ensure!(r.status() == 200, "asset {}", r.status());
        ensure!(r.headers()["content-type"] == "image/png", "content-type {:?}", r.headers()["content-type"]);
        let etag = r.headers()["etag"].to_str().map_err(|e| e.to_string())?.to_string();
        let got = r.bytes().map_err(|e| e.to_string())?;
        ensure!(hex::encode(Sha256::digest(&got)) == *asset_id, "asset bytes do not hash to {asset_id}");
        ensure!(got.as_ref() == bytes.as_slice(), "asset bytes differ from upload");
        let r = http
            .get(url(&format!("/assets/{asset_id}")))
            .header("if-none-match", etag)
            .send()
            .map_err(|e| e.to_string())?;
        ensure!(r.status() == 304, "conditional GET {}", r.status());
    }
    api_error(http.get(url(&format!("/assets/{}", "0".repeat(64)))).send(), 404, "asset_not_found")?;
    checked.push("GET /assets/{id}");

    let r = http.post(url("/jobs")).json(&json!({"site_id": site_id})).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 202, "submit {}", r.status());
    let job_id = r.json::<Value>().map_err(|e| e.to_string())?["job_id"].as_str().ok_or("no job_id")?.to_string();
    let done = poll(&http, &url(&format!("/jobs/{job_id}")))?;
    ensure!(done.stage == Stage::Done, "job ended {}", done.stage);
    api_error(http.post(url("/jobs")).json(&json!({"site_id": "nowhere"})).send(), 404, "site_not_found")?;
    api_error(http.get(url("/jobs/unknown")).send(), 404, "job_not_found")?;
    let jobs: Vec<GenerationJob> = http.get(url("/jobs")).send().and_then(|r| r.json()).map_err(|e| e.to_string())?;
    ensure!(jobs.iter().any(|j| j.job_id == job_id), "job missing from list");
    checked.push("POST /jobs, GET /jobs/{id}");

    let r = http
        .post(url("/jobs"))
        .json(&json!({"site_id": site_id, "profiles": {"mesh": "flaky-mesh"}}))
        .send()
        .map_err(|e| e.to_string())?;
    let flaky = r.json::<Value>().map_err(|e| e.to_string())?["job_id"].as_str().ok_or("no job_id")?.to_string();
    let failed = poll(&http, &url(&format!("/jobs/{flaky}")))?;
    ensure!(failed.stage == Stage::Failed, "flaky job ended {}", failed.stage);
    let r = http.post(url(&format!("/jobs/{flaky}/retry"))).send().map_err(|e| e.to_string())?;
    ensure!(r.status() == 202, "retry {}", r.status());
    let retried = poll(&http, &url(&format!("/jobs/{flaky}")))?;
    ensure!(retried.stage == Stage::Done && retried.timings.len() == 5, "retried job {:?}", retried.stage);
    api_error(http.post(url(&format!("/jobs/{job_id}/retry"))).send(), 409, "job_not_failed")?;
    checked.push("POST /jobs/{id}/retry");

    for (file, mime) in [("model.gltf", "model/gltf+json"), ("model.glb", "model/gltf-binary"), ("model.obj", "text/plain")] {
        let r = http.get(url(&format!("/models/{job_id}/{file}"))).send().map_err(|e| e.to_string())?;
        ensure!(r.status() == 200, "{file} {}", r.status());
        ensure!(r.headers()["content-type"] == mime, "{file} content-type {:?}", r.headers()["content-type"]);
        let etag = r.headers()["etag"].to_str().map_err(|e| e.to_string())?.trim_matches('"').to_string();
        let bytes = r.bytes().map_err(|e| e.to_string())?;
        ensure!(hex::encode(Sha256::digest(&bytes)) == etag, "{file} bytes do not hash to its etag");
        match file {
            "model.obj" => {
                parse_obj(&bytes).map_err(|e| e.to_string())?;
            }
            _ => {
                let doc = mesh::parse_gltf(&bytes).map_err(|e| e.to_string())?;
                ensure!(validate(&doc).errors.is_empty(), "{file} invalid");
            }
        }
    }
    api_error(http.get(url(&format!("/models/{job_id}/model.usdz"))).send(), 404, "model_not_found")?;
    checked.push("GET /models/{job}/{file}");

    let m: Value = http.get(url("/metrics?format=json")).send().and_then(|r| r.json()).map_err(|e| e.to_string())?;
    ensure!(m["rows"].as_array().map(Vec::len) == Some(2), "metrics rows {m}");
    ensure!(m["summary"]["mean_total"].is_number(), "metrics summary {m}");
    let r = http.get(url("/metrics?format=csv")).send().map_err(|e| e.to_string())?;
    ensure!(r.headers()["content-type"].to_str().unwrap_or("").starts_with("text/csv"), "csv content-type");
    let csv = r.text().map_err(|e| e.to_string())?;
    ensure!(csv.starts_with("site,t2d_s,t3d_s,total_s") && csv.lines().count() == 4, "csv body {csv}");
    api_error(http.get(url("/metrics?format=xml")).send(), 400, "invalid_format")?;
    checked.push("GET /metrics");

    api_error(http.get(url("/no/such/route")).send(), 404, "route_not_found")?;
    api_error(http.delete(url("/health")).send(), 405, "method_not_allowed")?;

    server.shutdown().map_err(|e| e.to_string())?;
    Ok(format!("{} endpoint groups, errors as ApiError", checked.len()))
}

fn poll(http: &reqwest::blocking::Client, url: &str) -> Result<GenerationJob, String> {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let job: GenerationJob = http.get(url).send().and_then(|r| r.json()).map_err(|e| e.to_string())?;
        if job.stage.is_terminal() {
            return Ok(job);
        }
        ensure!(Instant::now() < deadline, "job still at {} after 30 s", job.stage);
        std::thread::sleep(Duration::from_millis(25));
    }
}

/// Checks that a response is an ApiError with the given status and code.
fn api_error(r: reqwest::Result<reqwest::blocking::Response>, status: u16, code: &str) -> Result<(), String> {
    let r = r.map_err(|e| e.to_string())?;
    let got = r.status().as_u16();
    let body: Value = r.json().map_err(|e| format!("{code}: body is not JSON: {e}"))?;
    ensure!(got == status, "expected {status} {code}, got {got} {body}");
    let obj = body.as_object().ok_or(format!("{body} is not an object"))?;
    ensure!(
        obj.len() == 3 && body["status"] == json!(status) && body["code"] == json!(code) && body["message"].is_string(),
        "not an ApiError {{status, code, message}}: {body}"
    );
    Ok(())
}
