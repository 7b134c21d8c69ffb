//! Points `remote_http` profiles at a stand-in generator served locally with
//! axum, so the real multipart transport, bearer auth and retry path run.
//! The mesh endpoint answers 503 once before succeeding.
//!
//! ```text
//! cargo run --example remote_backend
//! ```

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Multipart, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use heritage3d::assets::{content_hash, AssetStore, MediaType};
use heritage3d::clock::SystemClock;
use heritage3d::fixtures;
use heritage3d::gateway::mock::{image_seed, mesh_params_for, render_isometric, render_mesh};
use heritage3d::gateway::{BackendKind, BackendProfile, Gateway, RetryPolicy, SynthesisRequest};
use heritage3d::prompt::{compile_prompt, PromptTemplate};

const TOKEN_VAR: &str = "EXAMPLE_GENERATOR_TOKEN";

type Parts = (Option<String>, Vec<Vec<u8>>);

async fn read_parts(mut form: Multipart) -> Result<Parts, StatusCode> {
    let mut prompt = None;
    let mut images = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|_| StatusCode::BAD_REQUEST)? {
        match field.name() {
            Some("prompt") => prompt = Some(field.text().await.map_err(|_| StatusCode::BAD_REQUEST)?),
            Some(n) if n.starts_with("image[") => images.push(field.bytes().await.map_err(|_| StatusCode::BAD_REQUEST)?.to_vec()),
            _ => return Err(StatusCode::BAD_REQUEST),
        }
    }
    Ok((prompt, images))
}

fn authorized(headers: &HeaderMap) -> bool {
    headers.get("authorization").and_then(|v| v.to_str().ok()) == Some("Bearer s3cret")
}

async fn image(headers: HeaderMap, form: Multipart) -> Result<Vec<u8>, StatusCode> {
    if !authorized(&headers) {
        return Err(StatusCode::UNAUTHORIZED);
    }
    let (prompt, refs) = read_parts(form).await?;
    let ids: Vec<String> = refs.iter().map(|b| content_hash(b)).collect();
    let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
    Ok(render_isometric(&image_seed(&prompt.ok_or(StatusCode::BAD_REQUEST)?, &ids)))
}

async fn mesh(State(calls): State<Arc<AtomicU32>>, form: Multipart) -> Result<Vec<u8>, StatusCode> {
    if calls.fetch_add(1, Ordering::SeqCst) == 0 {
        return Err(StatusCode::SERVICE_UNAVAILABLE);
    }
    let (_, images) = read_parts(form).await?;
    let input = images.first().ok_or(StatusCode::BAD_REQUEST)?;
    Ok(render_mesh(&mesh_params_for(&content_hash(input))))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let app = Router::new()
        .route("/v1/isometric", post(image))
        .route("/v1/mesh", post(mesh))
        .with_state(Arc::new(AtomicU32::new(0)));
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let base = format!("http://{}", listener.local_addr()?);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(listener, app).await.expect("serve");
        });
    });

    std::env::set_var(TOKEN_VAR, "s3cret");
    let retry = RetryPolicy {
        max_attempts: 3,
        base_delay: Duration::from_millis(100),
        backoff_factor: 2.0,
        jitter_fraction: 0.0,
    };
    let dir = tempfile::tempdir()?;
    let assets = Arc::new(AssetStore::open(dir.path())?);
    let gateway = Gateway::new(assets.clone(), SystemClock::shared())
        .with_profile(
            BackendProfile::remote("remote-image", BackendKind::ImageSynthesis, &format!("{base}/v1/isometric"))
                .with_auth_env_var(TOKEN_VAR),
        )?
        .with_profile(
            BackendProfile::remote("remote-mesh", BackendKind::MeshGeneration, &format!("{base}/v1/mesh")).with_retry(retry),
        )?;

    let reference = assets.put(&fixtures::street_view_png(1), MediaType::Png)?;
    let prompt = compile_prompt("isometric", &PromptTemplate::default_isometric(), &fixtures::choto_sona_attributes())?;
    let iso = gateway.synthesize_isometric(&SynthesisRequest::new(prompt, vec![reference]), "remote-image")?;
    println!("2D via {base}: {} in {:?}", iso.asset.asset_id, iso.latency);
    let mesh = gateway.generate_mesh(&iso.asset, "remote-mesh")?;
    println!("3D via {base}: {} ({}) after {} attempts", mesh.asset.asset_id, mesh.asset.media_type, mesh.attempts);
    Ok(())
}
