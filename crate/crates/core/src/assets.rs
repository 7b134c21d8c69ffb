//! Content-addressed asset store.
//!
//! Layout under the store root:
//!
//! ```text
//! assets/<first 2 hex>/<sha256 hex>        raw bytes
//! assets/<first 2 hex>/<sha256 hex>.meta   media_type=..., byte_length=...
//! ```
//!
//! The store is append-only: writing bytes that already exist is a no-op.

use std::fmt;
use std::fs;
use std::io::{self, Cursor, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum AssetError {
    #[error("asset {0} not found")]
    NotFound(String),
    #[error("malformed asset id {0:?}")]
    BadId(String),
    #[error("asset {id} is corrupt: stored bytes hash to {actual}")]
    Corrupt { id: String, actual: String },
    #[error("bad sidecar for asset {id}: {reason}")]
    BadMeta { id: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaType {
    Png,
    Jpeg,
    GltfJson,
    Glb,
    Obj,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::Png => "png",
            MediaType::Jpeg => "jpeg",
            MediaType::GltfJson => "gltf_json",
            MediaType::Glb => "glb",
            MediaType::Obj => "obj",
        }
    }

    /// IANA media type used on the wire.
    pub fn mime(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
            MediaType::GltfJson => "model/gltf+json",
            MediaType::Glb => "model/gltf-binary",
            MediaType::Obj => "text/plain",
        }
    }

    pub fn from_mime(mime: &str) -> Option<Self> {
        let essence = mime.split(';').next().unwrap_or("").trim();
        match essence.to_ascii_lowercase().as_str() {
            "image/png" => Some(MediaType::Png),
            "image/jpeg" | "image/jpg" => Some(MediaType::Jpeg),
            "model/gltf+json" => Some(MediaType::GltfJson),
            "model/gltf-binary" => Some(MediaType::Glb),
            "text/plain" | "model/obj" => Some(MediaType::Obj),
            _ => None,
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MediaType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "png" => Ok(MediaType::Png),
            "jpeg" => Ok(MediaType::Jpeg),
            "gltf_json" => Ok(MediaType::GltfJson),
            "glb" => Ok(MediaType::Glb),
            "obj" => Ok(MediaType::Obj),
            other => Err(format!("unknown media type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssetRef {
    pub asset_id: String,
    pub media_type: MediaType,
    pub byte_length: u64,
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_valid_asset_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Format and pixel dimensions read from an image header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageInfo {
    pub media_type: MediaType,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, thiserror::Error)]
#[error("undecodable image: {0}")]
pub struct ImageDecodeError(pub String);

/// Checks PNG/JPEG magic bytes and extracts dimensions without decoding pixels.
pub fn probe_image(bytes: &[u8]) -> Result<ImageInfo, ImageDecodeError> {
    let media_type = if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        MediaType::Png
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        MediaType::Jpeg
    } else {
        return Err(ImageDecodeError("not a PNG or JPEG stream".into()));
    };
    let format = match media_type {
        MediaType::Png => image::ImageFormat::Png,
        _ => image::ImageFormat::Jpeg,
    };
    let (width, height) = image::ImageReader::with_format(Cursor::new(bytes), format)
        .into_dimensions()
        .map_err(|e| ImageDecodeError(e.to_string()))?;
    if width == 0 || height == 0 {
        return Err(ImageDecodeError("zero image dimension".into()));
    }
    Ok(ImageInfo {
        media_type,
        width,
        height,
    })
}

#[derive(Debug, Clone)]
pub struct AssetStore {
    root: PathBuf,
}

impl AssetStore {
    /// `root` is the `assets/` directory itself.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, AssetError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn put(&self, bytes: &[u8], media_type: MediaType) -> Result<AssetRef, AssetError> {
        let asset_id = content_hash(bytes);
        let asset = AssetRef {
            asset_id,
            media_type,
            byte_length: bytes.len() as u64,
        };
        let path = self.blob_path(&asset.asset_id);
        if path.exists() {
            // First writer's media type wins; a hash collision on differing
            // media types means the caller mislabelled the bytes.
            return self.meta(&asset.asset_id);
        }
        let dir = path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir)?;
        write_atomic(&self.meta_path(&asset.asset_id), render_meta(&asset).as_bytes())?;
        write_atomic(&path, bytes)?;
        Ok(asset)
    }

    pub fn get(&self, asset_id: &str) -> Result<Vec<u8>, AssetError> {
        let path = self.checked_blob_path(asset_id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(AssetError::NotFound(asset_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let actual = content_hash(&bytes);
        if actual != asset_id {
            return Err(AssetError::Corrupt {
                id: asset_id.to_string(),
                actual,
            });
        }
        Ok(bytes)
    }

    pub fn meta(&self, asset_id: &str) -> Result<AssetRef, AssetError> {
        self.checked_blob_path(asset_id)?;
        let text = match fs::read_to_string(self.meta_path(asset_id)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(AssetError::NotFound(asset_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        parse_meta(asset_id, &text)
    }

    pub fn contains(&self, asset_id: &str) -> bool {
        is_valid_asset_id(asset_id) && self.blob_path(asset_id).exists()
    }

    /// Number of stored blobs.
    pub fn len(&self) -> Result<usize, AssetError> {
        let mut count = 0;
        for shard in fs::read_dir(&self.root)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path())? {
                let name = entry?.file_name();
                if is_valid_asset_id(&name.to_string_lossy()) {
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    pub fn is_empty(&self) -> Result<bool, AssetError> {
        Ok(self.len()? == 0)
    }

    fn checked_blob_path(&self, asset_id: &str) -> Result<PathBuf, AssetError> {
        if !is_valid_asset_id(asset_id) {
            return Err(AssetError::BadId(asset_id.to_string()));
        }
        Ok(self.blob_path(asset_id))
    }

    fn blob_path(&self, asset_id: &str) -> PathBuf {
        self.root.join(&asset_id[..2]).join(asset_id)
    }

    fn meta_path(&self, asset_id: &str) -> PathBuf {
        self.root
            .join(&asset_id[..2])
            .join(format!("{asset_id}.meta"))
    }
}

fn render_meta(asset: &AssetRef) -> String {
    format!(
        "media_type={}\nbyte_length={}\n",
        asset.media_type, asset.byte_length
    )
}

fn parse_meta(asset_id: &str, text: &str) -> Result<AssetRef, AssetError> {
    let bad = |reason: String| AssetError::BadMeta {
        id: asset_id.to_string(),
        reason,
    };
    let pairs = crate::kv::parse(text).map_err(|e| bad(e.to_string()))?;
    let media_type = pairs
        .get("media_type")
        .ok_or_else(|| bad("missing media_type".into()))?
        .parse::<MediaType>()
        .map_err(bad)?;
    let byte_length = pairs
        .get("byte_length")
        .ok_or_else(|| bad("missing byte_length".into()))?
        .parse::<u64>()
        .map_err(|e| bad(e.to_string()))?;
    Ok(AssetRef {
        asset_id: asset_id.to_string(),
        media_type,
        byte_length,
    })
}

/// Writes via a temporary sibling and rename so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(
        ".{file_name}.{}.{}.tmp",
        std::process::id(),
        rand::random::<u32>()
    ));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_data()?;
    }
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_png(w: u32, h: u32) -> Vec<u8> {
        let img = image::RgbImage::new(w, h);
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .unwrap();
        out
    }

    #[test]
    fn put_is_idempotent_and_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path().join("assets")).unwrap();
        let a = store.put(b"hello", MediaType::Obj).unwrap();
        let b = store.put(b"hello", MediaType::Obj).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.asset_id, content_hash(b"hello"));
        assert_eq!(store.len().unwrap(), 1);
        assert_eq!(store.get(&a.asset_id).unwrap(), b"hello");
        assert_eq!(store.meta(&a.asset_id).unwrap(), a);

        let shard = dir.path().join("assets").join(&a.asset_id[..2]);
        let meta = fs::read_to_string(shard.join(format!("{}.meta", a.asset_id))).unwrap();
        assert_eq!(meta, "media_type=obj\nbyte_length=5\n");
    }

    #[test]
    fn known_sha256_vector() {
        assert_eq!(
            content_hash(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rejects_path_like_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path()).unwrap();
        assert!(matches!(store.get("../etc/passwd"), Err(AssetError::BadId(_))));
        let missing = "0".repeat(64);
        assert!(matches!(store.get(&missing), Err(AssetError::NotFound(_))));
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let store = AssetStore::open(dir.path()).unwrap();
        let a = store.put(b"original", MediaType::Obj).unwrap();
        fs::write(store.blob_path(&a.asset_id), b"tampered").unwrap();
        assert!(matches!(
            store.get(&a.asset_id),
            Err(AssetError::Corrupt { .. })
        ));
    }

    #[test]
    fn probes_png_dimensions() {
        let info = probe_image(&tiny_png(7, 3)).unwrap();
        assert_eq!(info.media_type, MediaType::Png);
        assert_eq!((info.width, info.height), (7, 3));
        assert!(probe_image(b"GIF89a....").is_err());
        assert!(probe_image(b"\x89PNG\r\n\x1a\n").is_err());
    }
}
