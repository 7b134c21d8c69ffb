//! glTF 2.0 mesh toolkit: an in-memory document model, a reader/writer for
//! JSON and GLB containers, validation against the generator triangle budget,
//! geometric checks, vertex-clustering decimation and OBJ export.
//!
//! The document model decodes accessors into typed arrays. Buffers are not
//! kept verbatim; the writer re-packs everything into a single buffer.

mod decimate;
mod geometry;
mod gltf;
mod obj;
pub mod shapes;
mod validate;

use std::collections::BTreeMap;

use serde_json::Value;

pub use decimate::{cluster_vertices, decimate, decimate_with_stats, DecimateStats};
pub use geometry::{bounding_box, is_watertight, weld_positions, world_geometry, Aabb, WorldGeometry, WELD_TOLERANCE};
pub use gltf::{parse_gltf, parse_gltf_with_warnings, write_gltf, Container};
pub use obj::{export_obj, parse_obj, ObjMesh};
pub use validate::{validate, Issue, IssueCode, ValidationReport, TRIANGLE_BUDGET};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeshError {
    #[error("malformed glTF: {0}")]
    Malformed(String),
    #[error("unsupported glTF asset version {0:?} (expected \"2.0\")")]
    UnsupportedVersion(String),
    #[error("missing required field {0}")]
    MissingField(String),
    #[error("accessor {accessor} reads outside its buffer view")]
    AccessorOutOfRange { accessor: usize },
    #[error("unsupported glTF feature: {0}")]
    Unsupported(String),
    #[error("document is invalid: {0}")]
    Invalid(String),
    #[error("document has no vertices")]
    NoVertices,
    #[error("malformed OBJ at line {line}: {reason}")]
    Obj { line: usize, reason: String },
}

pub const GLTF_VERSION: &str = "2.0";

#[derive(Debug, Clone, PartialEq)]
pub struct MeshDocument {
    pub asset_version: String,
    pub generator: Option<String>,
    pub meshes: Vec<Mesh>,
    pub nodes: Vec<Node>,
    /// Root nodes of the single scene. `None` when the file declares no scene.
    pub scene: Option<Vec<usize>>,
    pub images: Vec<ImageData>,
    /// `materials`, `textures` and `samplers`, carried through untouched.
    pub passthrough: BTreeMap<String, Value>,
    pub extensions_used: Vec<String>,
}

impl Default for MeshDocument {
    fn default() -> Self {
        Self {
            asset_version: GLTF_VERSION.to_string(),
            generator: None,
            meshes: Vec::new(),
            nodes: Vec::new(),
            scene: None,
            images: Vec::new(),
            passthrough: BTreeMap::new(),
            extensions_used: Vec::new(),
        }
    }
}

impl MeshDocument {
    /// One mesh with one primitive, placed by a single identity node.
    pub fn from_triangles(positions: Vec<[f32; 3]>, indices: Vec<u32>) -> Self {
        Self {
            meshes: vec![Mesh {
                name: None,
                primitives: vec![Primitive::new(positions, indices)],
            }],
            nodes: vec![Node {
                mesh: Some(0),
                ..Node::default()
            }],
            scene: Some(vec![0]),
            ..Self::default()
        }
    }

    /// Replaces the transform of every root node.
    pub fn with_root_transform(mut self, transform: Transform) -> Self {
        for root in self.root_nodes() {
            if let Some(node) = self.nodes.get_mut(root) {
                node.transform = transform.clone();
            }
        }
        self
    }

    /// Scene roots, or every node that is nobody's child when no scene is declared.
    pub fn root_nodes(&self) -> Vec<usize> {
        match &self.scene {
            Some(roots) => roots.clone(),
            None => {
                let mut is_child = vec![false; self.nodes.len()];
                for node in &self.nodes {
                    for &c in &node.children {
                        if let Some(flag) = is_child.get_mut(c) {
                            *flag = true;
                        }
                    }
                }
                (0..self.nodes.len()).filter(|&i| !is_child[i]).collect()
            }
        }
    }

    /// Total triangles across all primitives of all meshes.
    pub fn triangle_count(&self) -> usize {
        self.meshes
            .iter()
            .flat_map(|m| &m.primitives)
            .map(|p| p.indices.len() / 3)
            .sum()
    }

    pub fn vertex_count(&self) -> usize {
        self.meshes
            .iter()
            .flat_map(|m| &m.primitives)
            .map(|p| p.positions.len())
            .sum()
    }

    /// Every mesh instance reachable from the scene with its world matrix.
    /// Documents without nodes place each mesh once at the origin.
    pub fn instances(&self) -> Vec<(usize, Mat4)> {
        if self.nodes.is_empty() {
            return (0..self.meshes.len()).map(|m| (m, Mat4::IDENTITY)).collect();
        }
        let mut out = Vec::new();
        let mut stack: Vec<(usize, Mat4, usize)> = self
            .root_nodes()
            .into_iter()
            .map(|r| (r, Mat4::IDENTITY, 0))
            .collect();
        stack.reverse();
        while let Some((idx, parent, depth)) = stack.pop() {
            // depth bound stops runaway traversal of cyclic hierarchies
            let Some(node) = self.nodes.get(idx) else { continue };
            if depth > self.nodes.len() {
                continue;
            }
            let world = parent.mul(&node.transform.matrix());
            if let Some(m) = node.mesh {
                if m < self.meshes.len() {
                    out.push((m, world));
                }
            }
            for &child in node.children.iter().rev() {
                stack.push((child, world, depth + 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub name: Option<String>,
    pub primitives: Vec<Primitive>,
}

/// A triangle-list primitive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Primitive {
    pub positions: Vec<[f32; 3]>,
    pub indices: Vec<u32>,
    pub normals: Option<Vec<[f32; 3]>>,
    pub texcoords: Option<Vec<[f32; 2]>>,
    pub material: Option<usize>,
}

impl Primitive {
    pub fn new(positions: Vec<[f32; 3]>, indices: Vec<u32>) -> Self {
        Self {
            positions,
            indices,
            ..Self::default()
        }
    }

    pub fn triangles(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        self.indices.chunks_exact(3).map(|t| [t[0], t[1], t[2]])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Node {
    pub name: Option<String>,
    pub mesh: Option<usize>,
    pub children: Vec<usize>,
    pub transform: Transform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Trs {
        translation: [f32; 3],
        rotation: [f32; 4],
        scale: [f32; 3],
    },
    /// Column-major 4x4, as stored in glTF.
    Matrix([f32; 16]),
}

impl Default for Transform {
    fn default() -> Self {
        Transform::Trs {
            translation: [0.0; 3],
            rotation: [0.0, 0.0, 0.0, 1.0],
            scale: [1.0; 3],
        }
    }
}

impl Transform {
    pub fn translation(t: [f32; 3]) -> Self {
        Transform::Trs {
            translation: t,
            rotation: [0.0, 0.0, 0.0, 1.0],
            scale: [1.0; 3],
        }
    }

    pub fn matrix(&self) -> Mat4 {
        match self {
            Transform::Matrix(m) => Mat4(m.map(f64::from)),
            Transform::Trs {
                translation: t,
                rotation: q,
                scale: s,
            } => {
                let [x, y, z, w] = q.map(f64::from);
                let [sx, sy, sz] = s.map(f64::from);
                let r = [
                    [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
                    [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
                    [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
                ];
                let mut m = [0.0; 16];
                for col in 0..3 {
                    let scale = [sx, sy, sz][col];
                    for row in 0..3 {
                        m[col * 4 + row] = r[row][col] * scale;
                    }
                }
                m[12] = f64::from(t[0]);
                m[13] = f64::from(t[1]);
                m[14] = f64::from(t[2]);
                m[15] = 1.0;
                Mat4(m)
            }
        }
    }
}

/// Column-major affine matrix in double precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4(pub [f64; 16]);

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4([
        1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);

    pub fn mul(&self, rhs: &Mat4) -> Mat4 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [0.0; 16];
        for col in 0..4 {
            for row in 0..4 {
                out[col * 4 + row] = (0..4).map(|k| a[k * 4 + row] * b[col * 4 + k]).sum();
            }
        }
        Mat4(out)
    }

    pub fn transform_point(&self, p: [f32; 3]) -> [f64; 3] {
        let m = &self.0;
        let [x, y, z] = p.map(f64::from);
        [
            m[0] * x + m[4] * y + m[8] * z + m[12],
            m[1] * x + m[5] * y + m[9] * z + m[13],
            m[2] * x + m[6] * y + m[10] * z + m[14],
        ]
    }
}

/// Image referenced by a texture.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageData {
    pub name: Option<String>,
    pub mime_type: Option<String>,
    pub source: ImageSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Uri(String),
    /// Bytes that lived in a buffer view; re-embedded on write.
    Embedded(Vec<u8>),
}
