//! glTF 2.0 JSON / GLB reading and writing for the supported subset:
//! triangle primitives, float positions/normals/UVs, u8/u16/u32 indices,
//! node TRS or matrix transforms, a single scene and pass-through materials.

use std::collections::BTreeMap;

use base64::Engine as _;
use serde_json::{json, Map, Value};

use super::{validate, ImageData, ImageSource, Mesh, MeshDocument, MeshError, Node, Primitive, Transform, GLTF_VERSION};

const GLB_MAGIC: &[u8; 4] = b"glTF";
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;

const FLOAT: u64 = 5126;
const UNSIGNED_BYTE: u64 = 5121;
const UNSIGNED_SHORT: u64 = 5123;
const UNSIGNED_INT: u64 = 5125;
const TRIANGLES: u64 = 4;
const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;

const DATA_URI_PREFIX: &str = "data:application/octet-stream;base64,";
const PASSTHROUGH_KEYS: [&str; 3] = ["materials", "samplers", "textures"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Container {
    Json,
    Glb,
}

/// Parses glTF JSON or a GLB container.
pub fn parse_gltf(bytes: &[u8]) -> Result<MeshDocument, MeshError> {
    parse_gltf_with_warnings(bytes).map(|(doc, _)| doc)
}

/// Like [`parse_gltf`], also returning notes about content the model drops
/// (extra vertex attributes, additional scenes, cameras, skins, animations).
pub fn parse_gltf_with_warnings(bytes: &[u8]) -> Result<(MeshDocument, Vec<String>), MeshError> {
    let (root, bin) = if bytes.starts_with(GLB_MAGIC) {
        let (json, bin) = split_glb(bytes)?;
        let root: Value = serde_json::from_slice(json).map_err(|e| MeshError::Malformed(format!("JSON chunk: {e}")))?;
        (root, bin)
    } else {
        let root: Value = serde_json::from_slice(bytes).map_err(|e| MeshError::Malformed(e.to_string()))?;
        (root, None)
    };
    Reader::new(root, bin)?.read()
}

fn split_glb(bytes: &[u8]) -> Result<(&[u8], Option<&[u8]>), MeshError> {
    let malformed = |m: &str| MeshError::Malformed(format!("GLB: {m}"));
    if bytes.len() < 12 {
        return Err(malformed("truncated header"));
    }
    let version = read_u32(bytes, 4);
    if version != 2 {
        return Err(MeshError::UnsupportedVersion(format!("GLB container version {version}")));
    }
    let total = read_u32(bytes, 8) as usize;
    if total > bytes.len() || total < 12 {
        return Err(malformed("declared length exceeds data"));
    }
    let mut chunks = Vec::new();
    let mut at = 12;
    while at < total {
        if at + 8 > total {
            return Err(malformed("truncated chunk header"));
        }
        let len = read_u32(bytes, at) as usize;
        let kind = read_u32(bytes, at + 4);
        let start = at + 8;
        let end = start.checked_add(len).filter(|&e| e <= total).ok_or_else(|| malformed("truncated chunk"))?;
        chunks.push((kind, &bytes[start..end]));
        at = end;
    }
    let mut iter = chunks.into_iter();
    let json = match iter.next() {
        Some((CHUNK_JSON, data)) => data,
        _ => return Err(malformed("first chunk must be JSON")),
    };
    let bin = iter.find(|(kind, _)| *kind == CHUNK_BIN).map(|(_, d)| d);
    Ok((json, bin))
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

struct View {
    buffer: usize,
    offset: usize,
    length: usize,
    stride: Option<usize>,
}

struct Reader<'a> {
    root: Value,
    buffers: Vec<std::borrow::Cow<'a, [u8]>>,
    views: Vec<View>,
    warnings: Vec<String>,
}

fn field<'v>(obj: &'v Value, path: &str, name: &str) -> Result<&'v Value, MeshError> {
    obj.get(name).ok_or_else(|| MeshError::MissingField(format!("{path}.{name}")))
}

fn as_index(v: &Value, what: &str) -> Result<usize, MeshError> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| MeshError::Malformed(format!("{what} must be a non-negative integer")))
}

fn opt_index(obj: &Value, name: &str, what: &str) -> Result<Option<usize>, MeshError> {
    obj.get(name).map(|v| as_index(v, what)).transpose()
}

fn array<'v>(root: &'v Value, name: &str) -> Result<&'v [Value], MeshError> {
    match root.get(name) {
        None => Ok(&[]),
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(MeshError::Malformed(format!("{name} must be an array"))),
    }
}

fn float_array<const N: usize>(v: &Value, what: &str) -> Result<[f32; N], MeshError> {
    let items = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| MeshError::Malformed(format!("{what} must have {N} numbers")))?;
    let mut out = [0.0; N];
    for (slot, item) in out.iter_mut().zip(items) {
        *slot = item
            .as_f64()
            .ok_or_else(|| MeshError::Malformed(format!("{what} must be numeric")))? as f32;
    }
    Ok(out)
}

impl<'a> Reader<'a> {
    fn new(root: Value, bin: Option<&'a [u8]>) -> Result<Self, MeshError> {
        if !root.is_object() {
            return Err(MeshError::Malformed("root must be an object".into()));
        }
        let asset = field(&root, "", "asset")?;
        let version = field(asset, "asset", "version")?
            .as_str()
            .ok_or_else(|| MeshError::Malformed("asset.version must be a string".into()))?;
        if version != GLTF_VERSION {
            return Err(MeshError::UnsupportedVersion(version.to_string()));
        }
        if let Some(required) = root.get("extensionsRequired").and_then(Value::as_array) {
            if let Some(ext) = required.first() {
                return Err(MeshError::Unsupported(format!("required extension {ext}")));
            }
        }

        let mut buffers = Vec::new();
        for (i, buf) in array(&root, "buffers")?.iter().enumerate() {
            let length = as_index(field(buf, &format!("buffers[{i}]"), "byteLength")?, "byteLength")?;
            let data: std::borrow::Cow<'a, [u8]> = match buf.get("uri").and_then(Value::as_str) {
                Some(uri) => {
                    let payload = uri
                        .strip_prefix("data:")
                        .and_then(|rest| rest.split_once(";base64,"))
                        .map(|(_, b64)| b64)
                        .ok_or_else(|| MeshError::Unsupported(format!("external buffer uri in buffers[{i}]")))?;
                    base64::engine::general_purpose::STANDARD
                        .decode(payload)
                        .map_err(|e| MeshError::Malformed(format!("buffers[{i}] base64: {e}")))?
                        .into()
                }
                None if i == 0 => bin
                    .ok_or_else(|| MeshError::Malformed("buffers[0] has no uri and no GLB binary chunk".into()))?
                    .into(),
                None => return Err(MeshError::Malformed(format!("buffers[{i}] has no uri"))),
            };
            if data.len() < length {
                return Err(MeshError::Malformed(format!(
                    "buffers[{i}] holds {} bytes, byteLength is {length}",
                    data.len()
                )));
            }
            buffers.push(data);
        }

        let mut views = Vec::new();
        for (i, v) in array(&root, "bufferViews")?.iter().enumerate() {
            let path = format!("bufferViews[{i}]");
            let buffer = as_index(field(v, &path, "buffer")?, "buffer")?;
            let offset = opt_index(v, "byteOffset", "byteOffset")?.unwrap_or(0);
            let length = as_index(field(v, &path, "byteLength")?, "byteLength")?;
            let stride = opt_index(v, "byteStride", "byteStride")?;
            let buf_len = buffers
                .get(buffer)
                .map(|b| b.len())
                .ok_or_else(|| MeshError::Malformed(format!("{path} references missing buffer {buffer}")))?;
            if offset.checked_add(length).is_none_or(|end| end > buf_len) {
                return Err(MeshError::Malformed(format!("{path} exceeds its buffer")));
            }
            views.push(View {
                buffer,
                offset,
                length,
                stride,
            });
        }

        Ok(Self {
            root,
            buffers,
            views,
            warnings: Vec::new(),
        })
    }

    fn read(mut self) -> Result<(MeshDocument, Vec<String>), MeshError> {
        let root = self.root.clone();
        let mut meshes = Vec::new();
        for (mi, mesh) in array(&root, "meshes")?.iter().enumerate() {
            let mut primitives = Vec::new();
            for (pi, prim) in array(mesh, "primitives")?.iter().enumerate() {
                primitives.push(self.primitive(prim, &format!("meshes[{mi}].primitives[{pi}]"))?);
            }
            meshes.push(Mesh {
                name: mesh.get("name").and_then(Value::as_str).map(str::to_string),
                primitives,
            });
        }

        let mut nodes = Vec::new();
        for (i, n) in array(&root, "nodes")?.iter().enumerate() {
            nodes.push(node(n, i)?);
        }

        let scenes = array(&root, "scenes")?;
        let scene = if scenes.is_empty() {
            None
        } else {
            if scenes.len() > 1 {
                self.warnings.push(format!("{} scenes present; only the default scene is kept", scenes.len()));
            }
            let idx = opt_index(&root, "scene", "scene")?.unwrap_or(0);
            let s = scenes
                .get(idx)
                .ok_or_else(|| MeshError::Malformed(format!("default scene {idx} does not exist")))?;
            let roots = array(s, "nodes")?
                .iter()
                .map(|v| as_index(v, "scene node"))
                .collect::<Result<Vec<_>, _>>()?;
            Some(roots)
        };

        let mut images = Vec::new();
        for (i, img) in array(&root, "images")?.iter().enumerate() {
            images.push(self.image(img, i)?);
        }

        let mut passthrough = BTreeMap::new();
        for key in PASSTHROUGH_KEYS {
            if let Some(v) = root.get(key) {
                passthrough.insert(key.to_string(), v.clone());
            }
        }
        for key in ["animations", "cameras", "skins"] {
            if root.get(key).is_some() {
                self.warnings.push(format!("{key} are not supported and were dropped"));
            }
        }

        let extensions_used = array(&root, "extensionsUsed")?
            .iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect();

        let asset = &root["asset"];
        let doc = MeshDocument {
            asset_version: GLTF_VERSION.to_string(),
            generator: asset.get("generator").and_then(Value::as_str).map(str::to_string),
            meshes,
            nodes,
            scene,
            images,
            passthrough,
            extensions_used,
        };
        Ok((doc, self.warnings))
    }

    fn primitive(&mut self, prim: &Value, path: &str) -> Result<Primitive, MeshError> {
        let mode = prim.get("mode").and_then(Value::as_u64).unwrap_or(TRIANGLES);
        if mode != TRIANGLES {
            return Err(MeshError::Unsupported(format!("{path}: primitive mode {mode}")));
        }
        let attrs = field(prim, path, "attributes")?;
        let pos_idx = as_index(field(attrs, &format!("{path}.attributes"), "POSITION")?, "POSITION")?;
        let positions = self.read_floats::<3>(pos_idx)?;
        let normals = opt_index(attrs, "NORMAL", "NORMAL")?
            .map(|i| self.read_floats::<3>(i))
            .transpose()?;
        let texcoords = opt_index(attrs, "TEXCOORD_0", "TEXCOORD_0")?
            .map(|i| self.read_floats::<2>(i))
            .transpose()?;
        if let Some(obj) = attrs.as_object() {
            for name in obj.keys() {
                if !matches!(name.as_str(), "POSITION" | "NORMAL" | "TEXCOORD_0") {
                    self.warnings.push(format!("{path}: attribute {name} dropped"));
                }
            }
        }
        let indices = match opt_index(prim, "indices", "indices")? {
            Some(i) => self.read_indices(i)?,
            None => (0..positions.len() as u32).collect(),
        };
        Ok(Primitive {
            positions,
            indices,
            normals,
            texcoords,
            material: opt_index(prim, "material", "material")?,
        })
    }

    /// Returns (component type, components per element, count, byte source).
    fn accessor(&self, index: usize) -> Result<(u64, usize, usize, bool, Option<(&[u8], usize)>), MeshError> {
        let acc = array(&self.root, "accessors")?
            .get(index)
            .ok_or_else(|| MeshError::Malformed(format!("accessor {index} does not exist")))?;
        let path = format!("accessors[{index}]");
        if acc.get("sparse").is_some() {
            return Err(MeshError::Unsupported(format!("{path}: sparse accessors")));
        }
        let component = field(acc, &path, "componentType")?
            .as_u64()
            .ok_or_else(|| MeshError::Malformed(format!("{path}.componentType")))?;
        let count = as_index(field(acc, &path, "count")?, "count")?;
        let kind = field(acc, &path, "type")?.as_str().unwrap_or("");
        let components = match kind {
            "SCALAR" => 1,
            "VEC2" => 2,
            "VEC3" => 3,
            "VEC4" => 4,
            other => return Err(MeshError::Unsupported(format!("{path}: accessor type {other}"))),
        };
        let normalized = acc.get("normalized").and_then(Value::as_bool).unwrap_or(false);
        let component_size = match component {
            UNSIGNED_BYTE | 5120 => 1,
            UNSIGNED_SHORT | 5122 => 2,
            UNSIGNED_INT | FLOAT => 4,
            other => return Err(MeshError::Malformed(format!("{path}: component type {other}"))),
        };
        let Some(view_idx) = opt_index(acc, "bufferView", "bufferView")? else {
            return Ok((component, components, count, normalized, None));
        };
        let view = self
            .views
            .get(view_idx)
            .ok_or_else(|| MeshError::Malformed(format!("{path} references missing bufferView {view_idx}")))?;
        let elem = component_size * components;
        let stride = view.stride.unwrap_or(elem);
        let acc_offset = opt_index(acc, "byteOffset", "byteOffset")?.unwrap_or(0);
        if stride < elem {
            return Err(MeshError::Malformed(format!("{path}: byteStride smaller than element")));
        }
        if count > 0 {
            let needed = (count - 1)
                .checked_mul(stride)
                .and_then(|n| n.checked_add(elem))
                .and_then(|n| n.checked_add(acc_offset));
            if needed.is_none_or(|n| n > view.length) {
                return Err(MeshError::AccessorOutOfRange { accessor: index });
            }
        }
        let buf = &self.buffers[view.buffer];
        let start = view.offset + acc_offset.min(view.length);
        let data = &buf[start..view.offset + view.length];
        Ok((component, components, count, normalized, Some((data, stride))))
    }

    fn read_floats<const N: usize>(&self, index: usize) -> Result<Vec<[f32; N]>, MeshError> {
        let (component, components, count, normalized, src) = self.accessor(index)?;
        if components != N {
            return Err(MeshError::Malformed(format!("accessor {index} must have {N} components")));
        }
        let decode: fn(&[u8]) -> f32 = match (component, normalized) {
            (FLOAT, _) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
            (UNSIGNED_BYTE, true) => |b| f32::from(b[0]) / 255.0,
            (UNSIGNED_SHORT, true) => |b| f32::from(u16::from_le_bytes([b[0], b[1]])) / 65535.0,
            _ => return Err(MeshError::Unsupported(format!("accessor {index}: component type {component} for vertex data"))),
        };
        let size = match component {
            FLOAT => 4,
            UNSIGNED_SHORT => 2,
            _ => 1,
        };
        let Some((data, stride)) = src else {
            return Ok(vec![[0.0; N]; count]);
        };
        Ok((0..count)
            .map(|i| {
                let base = i * stride;
                std::array::from_fn(|k| decode(&data[base + k * size..]))
            })
            .collect())
    }

    fn read_indices(&self, index: usize) -> Result<Vec<u32>, MeshError> {
        let (component, components, count, _, src) = self.accessor(index)?;
        if components != 1 {
            return Err(MeshError::Malformed(format!("index accessor {index} must be SCALAR")));
        }
        let Some((data, stride)) = src else {
            return Ok(vec![0; count]);
        };
        let read: fn(&[u8]) -> u32 = match component {
            UNSIGNED_BYTE => |b| u32::from(b[0]),
            UNSIGNED_SHORT => |b| u32::from(u16::from_le_bytes([b[0], b[1]])),
            UNSIGNED_INT => |b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
            other => return Err(MeshError::Malformed(format!("index accessor {index}: component type {other}"))),
        };
        Ok((0..count).map(|i| read(&data[i * stride..])).collect())
    }

    fn image(&self, img: &Value, i: usize) -> Result<ImageData, MeshError> {
        let source = if let Some(uri) = img.get("uri").and_then(Value::as_str) {
            ImageSource::Uri(uri.to_string())
        } else {
            let v = as_index(field(img, &format!("images[{i}]"), "bufferView")?, "bufferView")?;
            let view = self
                .views
                .get(v)
                .ok_or_else(|| MeshError::Malformed(format!("images[{i}] references missing bufferView {v}")))?;
            ImageSource::Embedded(self.buffers[view.buffer][view.offset..view.offset + view.length].to_vec())
        };
        Ok(ImageData {
            name: img.get("name").and_then(Value::as_str).map(str::to_string),
            mime_type: img.get("mimeType").and_then(Value::as_str).map(str::to_string),
            source,
        })
    }
}

fn node(n: &Value, i: usize) -> Result<Node, MeshError> {
    let what = |f: &str| format!("nodes[{i}].{f}");
    let transform = if let Some(m) = n.get("matrix") {
        Transform::Matrix(float_array::<16>(m, &what("matrix"))?)
    } else {
        let Transform::Trs {
            mut translation,
            mut rotation,
            mut scale,
        } = Transform::default()
        else {
            unreachable!("default transform is TRS")
        };
        if let Some(t) = n.get("translation") {
            translation = float_array(t, &what("translation"))?;
        }
        if let Some(r) = n.get("rotation") {
            rotation = float_array(r, &what("rotation"))?;
        }
        if let Some(s) = n.get("scale") {
            scale = float_array(s, &what("scale"))?;
        }
        Transform::Trs {
            translation,
            rotation,
            scale,
        }
    };
    Ok(Node {
        name: n.get("name").and_then(Value::as_str).map(str::to_string),
        mesh: opt_index(n, "mesh", &what("mesh"))?,
        children: array(n, "children")?
            .iter()
            .map(|c| as_index(c, &what("children")))
            .collect::<Result<_, _>>()?,
        transform,
    })
}

/// Serializes a structurally valid document. Output bytes are a pure function
/// of the document.
pub fn write_gltf(doc: &MeshDocument, container: Container) -> Result<Vec<u8>, MeshError> {
    let report = validate(doc);
    if let Some(first) = report.errors.first() {
        return Err(MeshError::Invalid(first.message.clone()));
    }

    let mut packer = Packer::default();
    let mut meshes = Vec::new();
    for mesh in &doc.meshes {
        let mut prims = Vec::new();
        for prim in &mesh.primitives {
            let mut attributes = Map::new();
            let pos = packer.positions(&prim.positions);
            attributes.insert("POSITION".into(), json!(pos));
            if let Some(normals) = &prim.normals {
                attributes.insert("NORMAL".into(), json!(packer.floats(normals, "VEC3")));
            }
            if let Some(uv) = &prim.texcoords {
                attributes.insert("TEXCOORD_0".into(), json!(packer.floats(uv, "VEC2")));
            }
            let mut p = Map::new();
            p.insert("attributes".into(), Value::Object(attributes));
            p.insert("indices".into(), json!(packer.indices(&prim.indices)));
            p.insert("mode".into(), json!(TRIANGLES));
            if let Some(m) = prim.material {
                p.insert("material".into(), json!(m));
            }
            prims.push(Value::Object(p));
        }
        let mut m = Map::new();
        if let Some(name) = &mesh.name {
            m.insert("name".into(), json!(name));
        }
        m.insert("primitives".into(), Value::Array(prims));
        meshes.push(Value::Object(m));
    }

    let images: Vec<Value> = doc
        .images
        .iter()
        .map(|img| {
            let mut o = Map::new();
            if let Some(name) = &img.name {
                o.insert("name".into(), json!(name));
            }
            match &img.source {
                ImageSource::Uri(uri) => {
                    o.insert("uri".into(), json!(uri));
                    if let Some(mime) = &img.mime_type {
                        o.insert("mimeType".into(), json!(mime));
                    }
                }
                ImageSource::Embedded(bytes) => {
                    o.insert("bufferView".into(), json!(packer.view(bytes, None)));
                    o.insert("mimeType".into(), json!(img.mime_type.as_deref().unwrap_or("image/png")));
                }
            }
            Value::Object(o)
        })
        .collect();

    let mut root = Map::new();
    let mut asset = Map::new();
    asset.insert("version".into(), json!(GLTF_VERSION));
    if let Some(g) = &doc.generator {
        asset.insert("generator".into(), json!(g));
    }
    root.insert("asset".into(), Value::Object(asset));
    if let Some(roots) = &doc.scene {
        root.insert("scene".into(), json!(0));
        root.insert("scenes".into(), json!([{ "nodes": roots }]));
    }
    if !doc.nodes.is_empty() {
        root.insert("nodes".into(), Value::Array(doc.nodes.iter().map(node_json).collect()));
    }
    if !meshes.is_empty() {
        root.insert("meshes".into(), Value::Array(meshes));
    }
    if !images.is_empty() {
        root.insert("images".into(), Value::Array(images));
    }
    for (k, v) in &doc.passthrough {
        root.insert(k.clone(), v.clone());
    }
    if !doc.extensions_used.is_empty() {
        root.insert("extensionsUsed".into(), json!(doc.extensions_used));
    }
    if !packer.accessors.is_empty() {
        root.insert("accessors".into(), Value::Array(std::mem::take(&mut packer.accessors)));
    }
    let has_bin = !packer.data.is_empty();
    if has_bin {
        root.insert("bufferViews".into(), Value::Array(std::mem::take(&mut packer.views)));
        let mut buffer = Map::new();
        buffer.insert("byteLength".into(), json!(packer.data.len()));
        if container == Container::Json {
            let encoded = base64::engine::general_purpose::STANDARD.encode(&packer.data);
            buffer.insert("uri".into(), json!(format!("{DATA_URI_PREFIX}{encoded}")));
        }
        root.insert("buffers".into(), json!([buffer]));
    }

    let json_bytes = serde_json::to_vec(&Value::Object(root)).map_err(|e| MeshError::Malformed(e.to_string()))?;
    Ok(match container {
        Container::Json => json_bytes,
        Container::Glb => glb(json_bytes, has_bin.then_some(packer.data)),
    })
}

fn node_json(n: &Node) -> Value {
    let mut o = Map::new();
    if let Some(name) = &n.name {
        o.insert("name".into(), json!(name));
    }
    if let Some(m) = n.mesh {
        o.insert("mesh".into(), json!(m));
    }
    if !n.children.is_empty() {
        o.insert("children".into(), json!(n.children));
    }
    match &n.transform {
        Transform::Matrix(m) => {
            o.insert("matrix".into(), json!(m.to_vec()));
        }
        Transform::Trs {
            translation,
            rotation,
            scale,
        } => {
            if *translation != [0.0; 3] {
                o.insert("translation".into(), json!(translation));
            }
            if *rotation != [0.0, 0.0, 0.0, 1.0] {
                o.insert("rotation".into(), json!(rotation));
            }
            if *scale != [1.0; 3] {
                o.insert("scale".into(), json!(scale));
            }
        }
    }
    Value::Object(o)
}

fn glb(mut json: Vec<u8>, bin: Option<Vec<u8>>) -> Vec<u8> {
    while json.len() % 4 != 0 {
        json.push(b' ');
    }
    let bin = bin.map(|mut b| {
        while b.len() % 4 != 0 {
            b.push(0);
        }
        b
    });
    let total = 12 + 8 + json.len() + bin.as_ref().map_or(0, |b| 8 + b.len());
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(GLB_MAGIC);
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json);
    if let Some(b) = bin {
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&b);
    }
    out
}

#[derive(Default)]
struct Packer {
    data: Vec<u8>,
    views: Vec<Value>,
    accessors: Vec<Value>,
}

impl Packer {
    fn view(&mut self, bytes: &[u8], target: Option<u32>) -> usize {
        while self.data.len() % 4 != 0 {
            self.data.push(0);
        }
        let mut v = Map::new();
        v.insert("buffer".into(), json!(0));
        v.insert("byteOffset".into(), json!(self.data.len()));
        v.insert("byteLength".into(), json!(bytes.len()));
        if let Some(t) = target {
            v.insert("target".into(), json!(t));
        }
        self.data.extend_from_slice(bytes);
        self.views.push(Value::Object(v));
        self.views.len() - 1
    }

    fn accessor(&mut self, mut acc: Map<String, Value>) -> usize {
        acc.entry("byteOffset").or_insert(json!(0));
        self.accessors.push(Value::Object(acc));
        self.accessors.len() - 1
    }

    fn floats<const N: usize>(&mut self, items: &[[f32; N]], kind: &str) -> usize {
        let bytes: Vec<u8> = items.iter().flatten().flat_map(|f| f.to_le_bytes()).collect();
        let view = self.view(&bytes, Some(ARRAY_BUFFER));
        let mut acc = Map::new();
        acc.insert("bufferView".into(), json!(view));
        acc.insert("componentType".into(), json!(FLOAT));
        acc.insert("count".into(), json!(items.len()));
        acc.insert("type".into(), json!(kind));
        self.accessor(acc)
    }

    fn positions(&mut self, positions: &[[f32; 3]]) -> usize {
        let idx = self.floats(positions, "VEC3");
        let mut min = [f32::INFINITY; 3];
        let mut max = [f32::NEG_INFINITY; 3];
        for p in positions {
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        if let Value::Object(acc) = &mut self.accessors[idx] {
            acc.insert("min".into(), json!(min));
            acc.insert("max".into(), json!(max));
        }
        idx
    }

    fn indices(&mut self, indices: &[u32]) -> usize {
        let max = indices.iter().copied().max().unwrap_or(0);
        let (component, bytes): (u64, Vec<u8>) = if max < u32::from(u16::MAX) {
            (UNSIGNED_SHORT, indices.iter().flat_map(|&i| (i as u16).to_le_bytes()).collect())
        } else {
            (UNSIGNED_INT, indices.iter().flat_map(|i| i.to_le_bytes()).collect())
        };
        let view = self.view(&bytes, Some(ELEMENT_ARRAY_BUFFER));
        let mut acc = Map::new();
        acc.insert("bufferView".into(), json!(view));
        acc.insert("componentType".into(), json!(component));
        acc.insert("count".into(), json!(indices.len()));
        acc.insert("type".into(), json!("SCALAR"));
        self.accessor(acc)
    }
}
