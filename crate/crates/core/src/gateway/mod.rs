//! Generator backends for isometric synthesis and image-to-3D meshing.
//!
//! Each backend is a named [`BackendProfile`]: either a remote HTTP adapter
//! speaking a generic multipart shape, or an offline mock. Profiles are
//! loaded once into a [`Gateway`] and never change afterwards.

pub mod mock;
mod remote;
mod retry;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::assets::{probe_image, AssetError, AssetRef, AssetStore, MediaType};
use crate::clock::SharedClock;
use crate::mesh::shapes::BuildingParams;
use crate::mesh::{parse_gltf, validate};
use crate::prompt::PromptText;

pub use remote::{HttpTransport, RemoteRequest, RemoteResponse, Transport};
pub use retry::{with_retry, CallError, RetryError, RetryPolicy};

/// Edge length of synthesized isometric renders.
pub const OUTPUT_SIZE_PX: u32 = 1024;
pub const DEFAULT_IMAGE_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MESH_TIMEOUT: Duration = Duration::from_secs(60);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 2;
pub const MOCK_IMAGE_PROFILE: &str = "mock-image";
pub const MOCK_MESH_PROFILE: &str = "mock-mesh";

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("unknown backend profile {0:?}")]
    UnknownProfile(String),
    #[error("profile {profile:?} is not a {expected} backend")]
    WrongKind { profile: String, expected: BackendKind },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: String },
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("backend returned invalid output: {0}")]
    InvalidOutput(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredential(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::UnknownProfile(_) => "unknown_profile",
            GatewayError::WrongKind { .. } => "wrong_backend_kind",
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::Unreachable { .. } => "backend_unreachable",
            GatewayError::Rejected(_) => "backend_rejected",
            GatewayError::InvalidOutput(_) => "invalid_output",
            GatewayError::MissingCredential(_) => "missing_credential",
            GatewayError::Config(_) => "invalid_config",
            GatewayError::Asset(_) => "asset_error",
        }
    }
}

impl From<RetryError> for GatewayError {
    fn from(e: RetryError) -> Self {
        match e {
            RetryError::Exhausted { attempts, last } => GatewayError::Unreachable {
                attempts,
                last: last.to_string(),
            },
            RetryError::Rejected(e) => GatewayError::Rejected(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ImageSynthesis,
    MeshGeneration,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::ImageSynthesis => "image_synthesis",
            BackendKind::MeshGeneration => "mesh_generation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    RemoteHttp,
    Mock,
}

/// Fault a mock backend injects instead of answering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Connection refused: retryable.
    Unreachable,
    /// HTTP 400: not retryable.
    Rejected,
    /// Answers with bytes that are neither PNG nor glTF.
    InvalidOutput,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSettings {
    /// Simulated service time per call, slept on the gateway clock.
    #[serde(rename = "delay_s", with = "secs", default)]
    pub delay: Duration,
    /// Mesh shape override; by default derived from the input asset id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building: Option<BuildingParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<FailureKind>,
    /// How many calls fail before the mock recovers; `None` fails forever.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackendProfile {
    pub name: String,
    pub kind: BackendKind,
    pub adapter: AdapterKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(rename = "timeout_s", with = "secs")]
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub mock: MockSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileEntry {
    kind: BackendKind,
    adapter: AdapterKind,
    endpoint_url: Option<String>,
    auth_env_var: Option<String>,
    #[serde(default, with = "opt_secs")]
    timeout_s: Option<Duration>,
    #[serde(default)]
    retry: Option<RetryPolicy>,
    max_in_flight: Option<usize>,
    #[serde(default)]
    mock: Option<MockSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    #[serde(default)]
    profiles: BTreeMap<String, ProfileEntry>,
}

impl BackendProfile {
    fn base(name: &str, kind: BackendKind, adapter: AdapterKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            adapter,
            endpoint_url: None,
            auth_env_var: None,
            timeout: match kind {
                BackendKind::ImageSynthesis => DEFAULT_IMAGE_TIMEOUT,
                BackendKind::MeshGeneration => DEFAULT_MESH_TIMEOUT,
            },
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            mock: MockSettings::default(),
        }
    }

    pub fn mock(name: &str, kind: BackendKind) -> Self {
        Self::base(name, kind, AdapterKind::Mock)
    }

    pub fn remote(name: &str, kind: BackendKind, endpoint_url: &str) -> Self {
        Self {
            endpoint_url: Some(endpoint_url.to_string()),
            ..Self::base(name, kind, AdapterKind::RemoteHttp)
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.mock.delay = delay;
        self
    }

    pub fn with_failure(mut self, kind: FailureKind, times: Option<u32>) -> Self {
        self.mock.fail = Some(kind);
        self.mock.fail_times = times;
        self
    }

    pub fn with_building(mut self, params: BuildingParams) -> Self {
        self.mock.building = Some(params);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_auth_env_var(mut self, var: &str) -> Self {
        self.auth_env_var = Some(var.to_string());
        self
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        let bad = |msg: String| Err(GatewayError::Config(format!("profile {:?}: {msg}", self.name)));
        if self.name.is_empty() {
            return bad("name is empty".into());
        }
        match (self.adapter, &self.endpoint_url) {
            (AdapterKind::RemoteHttp, None) => return bad("remote_http requires endpoint_url".into()),
            (AdapterKind::Mock, Some(_)) => return bad("mock adapter must not set endpoint_url".into()),
            _ => {}
        }
        if self.adapter == AdapterKind::RemoteHttp && self.mock != MockSettings::default() {
            return bad("mock settings on a remote_http profile".into());
        }
        if self.timeout.is_zero() {
            return bad("timeout must be positive".into());
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        self.retry.check().or_else(bad)
    }
}

/// Parses a `backends.toml` document: one `[profiles.<name>]` table per backend.
pub fn parse_profiles(text: &str) -> Result<Vec<BackendProfile>, GatewayError> {
    let file: ProfileFile = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
    file.profiles
        .into_iter()
        .map(|(name, e)| {
            let mut p = BackendProfile::base(&name, e.kind, e.adapter);
            p.endpoint_url = e.endpoint_url;
            p.auth_env_var = e.auth_env_var;
            if let Some(t) = e.timeout_s {
                p.timeout = t;
            }
            if let Some(r) = e.retry {
                p.retry = r;
            }
            if let Some(n) = e.max_in_flight {
                p.max_in_flight = n;
            }
            if let Some(m) = e.mock {
                p.mock = m;
            }
            p.check()?;
            Ok(p)
        })
        .collect()
}

pub fn load_profiles(path: &Path) -> Result<Vec<BackendProfile>, GatewayError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    parse_profiles(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub prompt: PromptText,
    pub reference_images: Vec<AssetRef>,
    pub output_width_px: u32,
    pub output_height_px: u32,
}

impl SynthesisRequest {
    pub fn new(prompt: PromptText, reference_images: Vec<AssetRef>) -> Self {
        Self {
            prompt,
            reference_images,
            output_width_px: OUTPUT_SIZE_PX,
            output_height_px: OUTPUT_SIZE_PX,
        }
    }

    fn check(&self) -> Result<(), GatewayError> {
        if self.reference_images.is_empty() {
            return Err(GatewayError::InvalidRequest("at least one reference image is required".into()));
        }
        if (self.output_width_px, self.output_height_px) != (OUTPUT_SIZE_PX, OUTPUT_SIZE_PX) {
            return Err(GatewayError::InvalidRequest(format!(
                "output must be {OUTPUT_SIZE_PX}x{OUTPUT_SIZE_PX}, got {}x{}",
                self.output_width_px, self.output_height_px
            )));
        }
        Ok(())
    }
}

/// A stored backend output and how long the call took on the gateway clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub asset: AssetRef,
    pub latency: Duration,
    pub attempts: u32,
}

struct Slot {
    profile: BackendProfile,
    in_flight: Mutex<usize>,
    freed: Condvar,
    calls: AtomicU32,
}

struct Permit<'a>(&'a Slot);

impl Slot {
    fn new(profile: BackendProfile) -> Self {
        Self {
            profile,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            calls: AtomicU32::new(0),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.profile.max_in_flight {
            self.freed.wait(&mut n);
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock() -= 1;
        self.0.freed.notify_one();
    }
}

enum Call<'a> {
    Image { prompt: &'a str, refs: &'a [AssetRef] },
    Mesh { image: &'a AssetRef },
}

pub struct Gateway {
    slots: BTreeMap<String, Arc<Slot>>,
    assets: Arc<AssetStore>,
    clock: SharedClock,
    transport: Arc<dyn Transport>,
}

impl Gateway {
    /// Starts with the built-in `mock-image` and `mock-mesh` profiles.
    pub fn new(assets: Arc<AssetStore>, clock: SharedClock) -> Self {
        let mut slots = BTreeMap::new();
        for p in [
            BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis),
            BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration),
        ] {
            slots.insert(p.name.clone(), Arc::new(Slot::new(p)));
        }
        Self {
            slots,
            assets,
            clock,
            transport: Arc::new(HttpTransport::new()),
        }
    }

    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = transport;
        self
    }

    /// Adds or replaces a profile of the same name.
    pub fn with_profile(mut self, profile: BackendProfile) -> Result<Self, GatewayError> {
        profile.check()?;
        self.slots.insert(profile.name.clone(), Arc::new(Slot::new(profile)));
        Ok(self)
    }

    pub fn with_profiles(self, profiles: impl IntoIterator<Item = BackendProfile>) -> Result<Self, GatewayError> {
        profiles.into_iter().try_fold(self, Gateway::with_profile)
    }

    pub fn profile(&self, name: &str) -> Option<&BackendProfile> {
        self.slots.get(name).map(|s| &s.profile)
    }

    pub fn profiles(&self) -> impl Iterator<Item = &BackendProfile> {
        self.slots.values().map(|s| &s.profile)
    }

    pub fn assets(&self) -> &Arc<AssetStore> {
        &self.assets
    }

    fn slot(&self, name: &str, kind: BackendKind) -> Result<&Slot, GatewayError> {
        let slot = self
            .slots
            .get(name)
            .ok_or_else(|| GatewayError::UnknownProfile(name.to_string()))?;
        if slot.profile.kind != kind {
            return Err(GatewayError::WrongKind {
                profile: name.to_string(),
                expected: kind,
            });
        }
        Ok(slot)
    }

    /// Produces a stored 1024x1024 PNG isometric render.
    pub fn synthesize_isometric(&self, request: &SynthesisRequest, profile: &str) -> Result<Generated, GatewayError> {
        let slot = self.slot(profile, BackendKind::ImageSynthesis)?;
        request.check()?;
        let call = Call::Image {
            prompt: &request.prompt.text,
            refs: &request.reference_images,
        };
        let (bytes, latency, attempts) = self.invoke(slot, &call)?;
        let info = probe_image(&bytes).map_err(|e| GatewayError::InvalidOutput(e.to_string()))?;
        if info.media_type != MediaType::Png {
            return Err(GatewayError::InvalidOutput(format!("expected PNG, got {}", info.media_type)));
        }
        if (info.width, info.height) != (OUTPUT_SIZE_PX, OUTPUT_SIZE_PX) {
            return Err(GatewayError::InvalidOutput(format!(
                "expected {OUTPUT_SIZE_PX}x{OUTPUT_SIZE_PX}, got {}x{}",
                info.width, info.height
            )));
        }
        let asset = self.assets.put(&bytes, MediaType::Png)?;
        Ok(Generated {
            asset,
            latency,
            attempts,
        })
    }

    /// Produces a stored glTF asset (JSON or GLB) that validates without errors.
    pub fn generate_mesh(&self, image: &AssetRef, profile: &str) -> Result<Generated, GatewayError> {
        let slot = self.slot(profile, BackendKind::MeshGeneration)?;
        let stored = self.assets.meta(&image.asset_id)?;
        if stored.media_type != MediaType::Png {
            return Err(GatewayError::InvalidRequest(format!(
                "input asset {} is {}, not png",
                image.asset_id, stored.media_type
            )));
        }
        let (bytes, latency, attempts) = self.invoke(slot, &Call::Mesh { image: &stored })?;
        let doc = parse_gltf(&bytes).map_err(|e| GatewayError::InvalidOutput(e.to_string()))?;
        let report = validate(&doc);
        if let Some(first) = report.errors.first() {
            return Err(GatewayError::InvalidOutput(first.message.clone()));
        }
        let media_type = if bytes.starts_with(b"glTF") {
            MediaType::Glb
        } else {
            MediaType::GltfJson
        };
        let asset = self.assets.put(&bytes, media_type)?;
        Ok(Generated {
            asset,
            latency,
            attempts,
        })
    }

    fn invoke(&self, slot: &Slot, call: &Call<'_>) -> Result<(Vec<u8>, Duration, u32), GatewayError> {
        let profile = &slot.profile;
        let remote = match profile.adapter {
            AdapterKind::RemoteHttp => Some(self.remote_request(profile, call)?),
            AdapterKind::Mock => None,
        };
        let start = self.clock.monotonic();
        let (bytes, attempts) = with_retry(
            &profile.retry,
            |d| self.clock.sleep(d),
            |_| {
                let _permit = slot.acquire();
                match &remote {
                    Some(req) => self.transport.post(req).map(|r| r.body),
                    None => self.mock_call(slot, call),
                }
            },
        )?;
        let latency = self.clock.monotonic().saturating_sub(start);
        tracing::debug!(profile = %profile.name, ?latency, attempts, "backend call finished");
        Ok((bytes, latency, attempts))
    }

    fn remote_request(&self, profile: &BackendProfile, call: &Call<'_>) -> Result<RemoteRequest, GatewayError> {
        let bearer_token = match &profile.auth_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::MissingCredential(var.clone()))?),
            None => None,
        };
        let (prompt, images) = match call {
            Call::Image { prompt, refs } => (
                Some(prompt.to_string()),
                refs.iter()
                    .map(|r| self.assets.get(&r.asset_id))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            Call::Mesh { image } => (None, vec![self.assets.get(&image.asset_id)?]),
        };
        Ok(RemoteRequest {
            url: profile.endpoint_url.clone().expect("checked on load"),
            bearer_token,
            prompt,
            images,
            timeout: profile.timeout,
        })
    }

    fn mock_call(&self, slot: &Slot, call: &Call<'_>) -> Result<Vec<u8>, CallError> {
        let settings = &slot.profile.mock;
        let n = slot.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let failing = settings.fail.filter(|_| settings.fail_times.is_none_or(|t| n <= t));
        match failing {
            Some(FailureKind::Unreachable) => return Err(CallError::Connect("injected: connection refused".into())),
            Some(FailureKind::Rejected) => {
                return Err(CallError::Status {
                    code: 400,
                    body: "injected rejection".into(),
                })
            }
            Some(FailureKind::InvalidOutput) => return Ok(b"not an asset".to_vec()),
            None => {}
        }
        if settings.delay > slot.profile.timeout {
            self.clock.sleep(slot.profile.timeout);
            return Err(CallError::Timeout);
        }
        self.clock.sleep(settings.delay);
        Ok(match call {
            Call::Image { prompt, refs } => {
                let ids: Vec<&str> = refs.iter().map(|r| r.asset_id.as_str()).collect();
                mock::render_isometric(&mock::image_seed(prompt, &ids))
            }
            Call::Mesh { image } => {
                let params = settings
                    .building
                    .unwrap_or_else(|| mock::mesh_params_for(&image.asset_id));
                mock::render_mesh(&params)
            }
        })
    }
}

/// `Duration` as fractional seconds.
mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

mod opt_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Option::<f64>::deserialize(d)?
            .map(|v| Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::fixtures;
    use crate::mesh::shapes;
    use crate::prompt::{compile_prompt, PromptTemplate, DEFAULT_TEMPLATE_ID};

    struct Fixture {
        _dir: tempfile::TempDir,
        assets: Arc<AssetStore>,
        clock: Arc<ManualClock>,
        reference: AssetRef,
        prompt: PromptText,
    }

    fn fixture() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let assets = Arc::new(AssetStore::open(dir.path().join("assets")).unwrap());
        let reference = assets.put(&fixtures::street_view_png(0), MediaType::Png).unwrap();
        let prompt = compile_prompt(
            DEFAULT_TEMPLATE_ID,
            &PromptTemplate::default_isometric(),
            &fixtures::choto_sona_attributes(),
        )
        .unwrap();
        Fixture {
            _dir: dir,
            assets,
            clock: ManualClock::shared(),
            reference,
            prompt,
        }
    }

    impl Fixture {
        fn gateway(&self) -> Gateway {
            Gateway::new(self.assets.clone(), self.clock.clone())
        }

        fn request(&self) -> SynthesisRequest {
            SynthesisRequest::new(self.prompt.clone(), vec![self.reference.clone()])
        }
    }

    struct Scripted(Mutex<Vec<Result<RemoteResponse, CallError>>>);

    impl Transport for Scripted {
        fn post(&self, _: &RemoteRequest) -> Result<RemoteResponse, CallError> {
            self.0.lock().remove(0)
        }
    }

    fn png(w: u32, h: u32) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        image::RgbImage::new(w, h).write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    fn remote_gateway(f: &Fixture, kind: BackendKind, script: Vec<Result<RemoteResponse, CallError>>) -> Gateway {
        let profile = BackendProfile::remote("remote", kind, "http://127.0.0.1:9/").with_retry(RetryPolicy {
            jitter_fraction: 0.0,
            ..RetryPolicy::default()
        });
        f.gateway()
            .with_transport(Arc::new(Scripted(Mutex::new(script))))
            .with_profile(profile)
            .unwrap()
    }

    fn ok(body: Vec<u8>) -> Result<RemoteResponse, CallError> {
        Ok(RemoteResponse { media_type: None, body })
    }

    #[test]
    fn mock_image_is_deterministic_1024_png() {
        let f = fixture();
        let g = f.gateway();
        let a = g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap();
        let b = g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap();
        assert_eq!(a.asset.asset_id, b.asset.asset_id);
        let info = probe_image(&f.assets.get(&a.asset.asset_id).unwrap()).unwrap();
        assert_eq!((info.width, info.height), (1024, 1024));
    }

    #[test]
    fn mock_latency_follows_configured_delay() {
        let f = fixture();
        let g = f
            .gateway()
            .with_profile(
                BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis)
                    .with_delay(Duration::from_millis(10_200)),
            )
            .unwrap();
        let out = g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap();
        assert_eq!(out.latency, Duration::from_millis(10_200));
    }

    #[test]
    fn mock_mesh_dome_only_s2_has_320_triangles() {
        let f = fixture();
        let g = f
            .gateway()
            .with_profile(
                BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration)
                    .with_building(shapes::BuildingParams::dome_only(2)),
            )
            .unwrap();
        let image = g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap().asset;
        let a = g.generate_mesh(&image, MOCK_MESH_PROFILE).unwrap();
        let b = g.generate_mesh(&image, MOCK_MESH_PROFILE).unwrap();
        assert_eq!(a.asset.asset_id, b.asset.asset_id);
        assert_eq!(a.asset.media_type, MediaType::Glb);
        let doc = parse_gltf(&f.assets.get(&a.asset.asset_id).unwrap()).unwrap();
        // Oracle: count faces produced by subdividing 20 faces twice, 4 each time.
        let mut faces = 20;
        for _ in 0..2 {
            faces *= 4;
        }
        assert_eq!(doc.triangle_count(), faces);
    }

    #[test]
    fn default_mock_mesh_is_in_budget() {
        let f = fixture();
        let g = f.gateway();
        let image = g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap().asset;
        let mesh = g.generate_mesh(&image, MOCK_MESH_PROFILE).unwrap();
        let report = validate(&parse_gltf(&f.assets.get(&mesh.asset.asset_id).unwrap()).unwrap());
        assert!(report.is_valid());
        assert!(report.budget_ok, "{}", report.triangle_count);
    }

    #[test]
    fn kind_and_request_checks() {
        let f = fixture();
        let g = f.gateway();
        assert!(matches!(
            g.synthesize_isometric(&f.request(), MOCK_MESH_PROFILE),
            Err(GatewayError::WrongKind { .. })
        ));
        let mut req = f.request();
        req.reference_images.clear();
        assert!(matches!(
            g.synthesize_isometric(&req, MOCK_IMAGE_PROFILE),
            Err(GatewayError::InvalidRequest(_))
        ));
        let mut req = f.request();
        req.output_height_px = 512;
        assert!(matches!(
            g.synthesize_isometric(&req, MOCK_IMAGE_PROFILE),
            Err(GatewayError::InvalidRequest(_))
        ));
        let gltf = f.assets.put(b"{}", MediaType::GltfJson).unwrap();
        assert!(matches!(
            g.generate_mesh(&gltf, MOCK_MESH_PROFILE),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn remote_wrong_dimensions_is_invalid_output() {
        let f = fixture();
        let g = remote_gateway(&f, BackendKind::ImageSynthesis, vec![ok(png(1024, 512))]);
        let err = g.synthesize_isometric(&f.request(), "remote").unwrap_err();
        assert_eq!(err.code(), "invalid_output");
    }

    #[test]
    fn remote_garbage_mesh_is_invalid_output() {
        let f = fixture();
        let g = remote_gateway(&f, BackendKind::MeshGeneration, vec![ok(b"{not gltf".to_vec())]);
        let err = g.generate_mesh(&f.reference, "remote").unwrap_err();
        assert_eq!(err.code(), "invalid_output");
    }

    #[test]
    fn remote_retries_then_succeeds() {
        let f = fixture();
        let five_oh_three = || Err(CallError::Status { code: 503, body: String::new() });
        let g = remote_gateway(
            &f,
            BackendKind::ImageSynthesis,
            vec![five_oh_three(), five_oh_three(), ok(png(1024, 1024))],
        );
        let out = g.synthesize_isometric(&f.request(), "remote").unwrap();
        assert_eq!(out.attempts, 3);
        // 0.5 s + 1.0 s of backoff on the manual clock
        assert_eq!(out.latency, Duration::from_millis(1500));
    }

    #[test]
    fn remote_exhaustion_and_rejection() {
        let f = fixture();
        let g = remote_gateway(&f, BackendKind::ImageSynthesis, vec![Err(CallError::Timeout); 3]);
        assert_eq!(g.synthesize_isometric(&f.request(), "remote").unwrap_err().code(), "backend_unreachable");
        let g = remote_gateway(
            &f,
            BackendKind::ImageSynthesis,
            vec![Err(CallError::Status { code: 401, body: String::new() })],
        );
        assert_eq!(g.synthesize_isometric(&f.request(), "remote").unwrap_err().code(), "backend_rejected");
    }

    #[test]
    fn missing_credential() {
        let f = fixture();
        let g = f
            .gateway()
            .with_profile(
                BackendProfile::remote("r", BackendKind::ImageSynthesis, "http://127.0.0.1:9/")
                    .with_auth_env_var("HERITAGE3D_TEST_KEY_THAT_IS_NOT_SET"),
            )
            .unwrap();
        assert!(matches!(
            g.synthesize_isometric(&f.request(), "r"),
            Err(GatewayError::MissingCredential(_))
        ));
    }

    #[test]
    fn injected_failures() {
        let f = fixture();
        let g = f
            .gateway()
            .with_profile(
                BackendProfile::mock(MOCK_IMAGE_PROFILE, BackendKind::ImageSynthesis)
                    .with_failure(FailureKind::Unreachable, Some(2)),
            )
            .unwrap();
        assert_eq!(g.synthesize_isometric(&f.request(), MOCK_IMAGE_PROFILE).unwrap().attempts, 3);

        let g = f
            .gateway()
            .with_profile(
                BackendProfile::mock(MOCK_MESH_PROFILE, BackendKind::MeshGeneration)
                    .with_timeout(Duration::from_secs(1))
                    .with_delay(Duration::from_secs(5)),
            )
            .unwrap();
        let err = g.generate_mesh(&f.reference, MOCK_MESH_PROFILE).unwrap_err();
        assert!(matches!(err, GatewayError::Unreachable { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn profiles_from_toml() {
        let text = r#"
            [profiles.hosted-image]
            kind = "image_synthesis"
            adapter = "remote_http"
            endpoint_url = "https://example.invalid/v1/isometric"
            auth_env_var = "IMAGE_API_KEY"

            [profiles.slow-mesh]
            kind = "mesh_generation"
            adapter = "mock"
            max_in_flight = 1
            [profiles.slow-mesh.mock]
            delay_s = 34.0
            [profiles.slow-mesh.retry]
            max_attempts = 2
            base_delay_s = 0.25
            backoff_factor = 3.0
        "#;
        let profiles = parse_profiles(text).unwrap();
        assert_eq!(profiles.len(), 2);
        let image = &profiles[0];
        assert_eq!(image.timeout, DEFAULT_IMAGE_TIMEOUT);
        assert_eq!(image.auth_env_var.as_deref(), Some("IMAGE_API_KEY"));
        let mesh = &profiles[1];
        assert_eq!(mesh.timeout, DEFAULT_MESH_TIMEOUT);
        assert_eq!(mesh.mock.delay, Duration::from_secs(34));
        assert_eq!(mesh.retry.delay(2), Duration::from_millis(750));

        let bad = "[profiles.x]\nkind = \"mesh_generation\"\nadapter = \"remote_http\"\n";
        assert!(matches!(parse_profiles(bad), Err(GatewayError::Config(_))));
        let bad = "[profiles.x]\nkind = \"mesh_generation\"\nadapter = \"mock\"\nendpoint_url = \"http://x\"\n";
        assert!(parse_profiles(bad).is_err());
    }

    #[test]
    fn in_flight_limit_is_respected() {
        use std::sync::atomic::AtomicUsize;

        struct Counting {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Transport for Counting {
            fn post(&self, _: &RemoteRequest) -> Result<RemoteResponse, CallError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(RemoteResponse {
                    media_type: None,
                    body: png(1024, 1024),
                })
            }
        }
        let f = fixture();
        let counting = Arc::new(Counting {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let g = Arc::new(
            f.gateway()
                .with_transport(counting.clone())
                .with_profile(BackendProfile::remote("r", BackendKind::ImageSynthesis, "http://x/"))
                .unwrap(),
        );
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let g = g.clone();
                let req = f.request();
                std::thread::spawn(move || g.synthesize_isometric(&req, "r").unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(counting.peak.load(Ordering::SeqCst), DEFAULT_MAX_IN_FLIGHT);
    }
}
