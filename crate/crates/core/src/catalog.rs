//! Heritage site catalog: site registration, multi-view image ingestion and
//! acquisition readiness.
//!
//! Sites persist as `catalog/<site_id>.json`; image bytes go to the shared
//! content-addressed [`AssetStore`].

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::assets::{self, AssetError, AssetRef, AssetStore};
use crate::metrics::BaselineHours;

/// Minimum circular spread of capture azimuths for a site to count as well covered.
pub const MIN_COVERAGE_DEG: f64 = 90.0;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("site name must not be empty")]
    EmptyName,
    #[error("site id {0:?} may only contain lowercase letters, digits, '-' and '_'")]
    InvalidSiteId(String),
    #[error("site {0} is already registered with different content")]
    DuplicateSite(String),
    #[error("site {0} not found")]
    UnknownSite(String),
    #[error("azimuth {0} is outside [0, 360)")]
    InvalidAzimuth(f64),
    #[error(transparent)]
    UndecodableImage(#[from] assets::ImageDecodeError),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error("catalog document {path}: {source}")]
    Document {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    StreetViewUrl,
    LocalFile,
    RemoteUrl,
}

/// Capture details supplied by the caller when ingesting an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    pub azimuth_deg: f64,
    pub source: CaptureSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captured_at: Option<DateTime<Utc>>,
}

impl Capture {
    pub fn new(azimuth_deg: f64, source: CaptureSource) -> Self {
        Self {
            azimuth_deg,
            source,
            captured_at: None,
        }
    }
}

/// Stored capture metadata; dimensions come from the image header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub azimuth_deg: f64,
    pub source: CaptureSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captured_at: Option<DateTime<Utc>>,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteImage {
    #[serde(flatten)]
    pub asset: AssetRef,
    pub capture: CaptureMeta,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SiteRecord {
    /// Empty on registration means "derive from the name".
    #[serde(default)]
    pub site_id: String,
    pub name: String,
    #[serde(default)]
    pub site_type: String,
    #[serde(default)]
    pub material: String,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub scale_elements: Vec<String>,
    #[serde(default)]
    pub illumination: String,
    /// Photogrammetry time estimate for this site, used in speedup reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_hours: Option<BaselineHours>,
    #[serde(default)]
    pub images: Vec<SiteImage>,
}

impl SiteRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn azimuths(&self) -> Vec<f64> {
        self.images.iter().map(|i| i.capture.azimuth_deg).collect()
    }

    fn same_attributes(&self, other: &SiteRecord) -> bool {
        let strip = |r: &SiteRecord| SiteRecord {
            images: Vec::new(),
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadinessReport {
    pub site_id: String,
    pub has_images: bool,
    pub image_count: usize,
    pub coverage_deg: f64,
    /// Advisory only; low coverage never blocks job submission.
    pub coverage_ok: bool,
    pub issues: Vec<String>,
}

/// Validates an azimuth against the half-open range `[0, 360)`.
pub fn check_azimuth(azimuth_deg: f64) -> Result<f64, CatalogError> {
    if azimuth_deg.is_finite() && (0.0..360.0).contains(&azimuth_deg) {
        Ok(azimuth_deg)
    } else {
        Err(CatalogError::InvalidAzimuth(azimuth_deg))
    }
}

/// Circular spread of view azimuths: 360 minus the largest gap between
/// neighbouring views on the circle. Zero or one view spans nothing.
///
/// Inputs are reduced modulo 360; non-finite values are ignored.
pub fn azimuthal_coverage(azimuths: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = azimuths
        .iter()
        .filter(|a| a.is_finite())
        .map(|a| a.rem_euclid(360.0))
        // rem_euclid can round up to exactly 360 for tiny negatives
        .map(|a| if a >= 360.0 { 0.0 } else { a })
        .collect();
    if sorted.len() < 2 {
        return 0.0;
    }
    sorted.sort_by(f64::total_cmp);
    let wrap_gap = sorted[0] + 360.0 - sorted[sorted.len() - 1];
    let max_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(wrap_gap, f64::max);
    (360.0 - max_gap).max(0.0)
}

/// Derives a filesystem-safe id from a site name.
pub fn slugify(name: &str) -> String {
    let mut slug = String::with_capacity(name.len());
    let mut pending_dash = false;
    for ch in name.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_alphanumeric() {
            if pending_dash && !slug.is_empty() {
                slug.push('-');
            }
            pending_dash = false;
            slug.push(ch);
        } else {
            pending_dash = true;
        }
    }
    if slug.is_empty() {
        // Names with no ASCII alphanumerics still need a stable id.
        slug = format!("site-{}", &assets::content_hash(name.as_bytes())[..12]);
    }
    slug
}

fn is_valid_site_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .bytes()
            .all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_'))
}

/// Site registry. Reads are concurrent; register and ingest are serialized.
#[derive(Debug)]
pub struct Catalog {
    dir: PathBuf,
    assets: Arc<AssetStore>,
    sites: RwLock<BTreeMap<String, SiteRecord>>,
    writer: Mutex<()>,
}

impl Catalog {
    /// Opens (or creates) the catalog rooted at `dir` (the `catalog/` directory).
    pub fn open(dir: impl Into<PathBuf>, assets: Arc<AssetStore>) -> Result<Self, CatalogError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sites = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let record = read_record(&path)?;
            sites.insert(record.site_id.clone(), record);
        }
        Ok(Self {
            dir,
            assets,
            sites: RwLock::new(sites),
            writer: Mutex::new(()),
        })
    }

    pub fn assets(&self) -> &Arc<AssetStore> {
        &self.assets
    }

    pub fn register_site(&self, mut record: SiteRecord) -> Result<String, CatalogError> {
        if record.name.trim().is_empty() {
            return Err(CatalogError::EmptyName);
        }
        if record.site_id.is_empty() {
            record.site_id = slugify(&record.name);
        } else if !is_valid_site_id(&record.site_id) {
            return Err(CatalogError::InvalidSiteId(record.site_id));
        }
        let _guard = self.writer.lock();
        if let Some(existing) = self.sites.read().get(&record.site_id) {
            return if existing.same_attributes(&record) {
                Ok(existing.site_id.clone())
            } else {
                Err(CatalogError::DuplicateSite(record.site_id))
            };
        }
        self.persist(&record)?;
        let id = record.site_id.clone();
        self.sites.write().insert(id.clone(), record);
        Ok(id)
    }

    pub fn site(&self, site_id: &str) -> Result<SiteRecord, CatalogError> {
        self.sites
            .read()
            .get(site_id)
            .cloned()
            .ok_or_else(|| CatalogError::UnknownSite(site_id.to_string()))
    }

    pub fn sites(&self) -> Vec<SiteRecord> {
        self.sites.read().values().cloned().collect()
    }

    pub fn ingest_image(
        &self,
        site_id: &str,
        bytes: &[u8],
        capture: Capture,
    ) -> Result<AssetRef, CatalogError> {
        let azimuth_deg = check_azimuth(capture.azimuth_deg)?;
        let info = assets::probe_image(bytes)?;
        let _guard = self.writer.lock();
        let mut record = self.site(site_id)?;
        let asset = self.assets.put(bytes, info.media_type)?;
        if record.images.iter().any(|i| i.asset.asset_id == asset.asset_id) {
            return Ok(asset);
        }
        record.images.push(SiteImage {
            asset: asset.clone(),
            capture: CaptureMeta {
                azimuth_deg,
                source: capture.source,
                captured_at: capture.captured_at,
                width_px: info.width,
                height_px: info.height,
            },
        });
        self.persist(&record)?;
        self.sites.write().insert(record.site_id.clone(), record);
        Ok(asset)
    }

    pub fn validate_site_ready(&self, site_id: &str) -> Result<ReadinessReport, CatalogError> {
        let record = self.site(site_id)?;
        Ok(readiness(&record))
    }

    fn persist(&self, record: &SiteRecord) -> Result<(), CatalogError> {
        let path = self.record_path(&record.site_id);
        let mut json = serde_json::to_vec_pretty(record).map_err(|source| {
            CatalogError::Document {
                path: path.clone(),
                source,
            }
        })?;
        json.push(b'\n');
        assets::write_atomic(&path, &json)?;
        Ok(())
    }

    fn record_path(&self, site_id: &str) -> PathBuf {
        self.dir.join(format!("{site_id}.json"))
    }
}

/// Readiness of an in-memory record; see [`Catalog::validate_site_ready`].
pub fn readiness(record: &SiteRecord) -> ReadinessReport {
    let coverage_deg = azimuthal_coverage(&record.azimuths());
    let has_images = !record.images.is_empty();
    let coverage_ok = coverage_deg >= MIN_COVERAGE_DEG;
    let mut issues = Vec::new();
    if !has_images {
        issues.push("no images ingested".to_string());
    }
    if !coverage_ok {
        issues.push(format!(
            "azimuthal coverage {coverage_deg:.1} deg is below the recommended {MIN_COVERAGE_DEG} deg"
        ));
    }
    ReadinessReport {
        site_id: record.site_id.clone(),
        has_images,
        image_count: record.images.len(),
        coverage_deg,
        coverage_ok,
        issues,
    }
}

fn read_record(path: &Path) -> Result<SiteRecord, CatalogError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|source| CatalogError::Document {
        path: path.to_path_buf(),
        source,
    })
}
