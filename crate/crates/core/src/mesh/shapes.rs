//! Procedural meshes: test fixtures and the mock generator's building.

use std::collections::HashMap;

use super::{Mesh, MeshDocument, Node, Primitive};

/// Axis-aligned cube spanning `[0,1]^3`: 8 shared vertices, 12 outward-wound triangles.
pub fn unit_cube() -> MeshDocument {
    let positions = (0..8u32)
        .map(|i| [(i & 1) as f32, ((i >> 1) & 1) as f32, ((i >> 2) & 1) as f32])
        .collect();
    #[rustfmt::skip]
    let indices = vec![
        0, 2, 3,  0, 3, 1, // -z
        4, 5, 7,  4, 7, 6, // +z
        0, 1, 5,  0, 5, 4, // -y
        2, 6, 7,  2, 7, 3, // +y
        0, 4, 6,  0, 6, 2, // -x
        1, 3, 7,  1, 7, 5, // +x
    ];
    MeshDocument::from_triangles(positions, indices)
}

/// Unit icosphere after `subdivisions` rounds of midpoint splitting.
/// Has `20 * 4^subdivisions` triangles.
pub fn icosphere(subdivisions: u32) -> MeshDocument {
    let (positions, indices) = icosphere_geometry(subdivisions, [0.0; 3], 1.0);
    MeshDocument::from_triangles(positions, indices)
}

pub fn icosphere_geometry(subdivisions: u32, center: [f32; 3], radius: f32) -> (Vec<[f32; 3]>, Vec<u32>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0], [1.0, t, 0.0], [-1.0, -t, 0.0], [1.0, -t, 0.0],
        [0.0, -1.0, t], [0.0, 1.0, t], [0.0, -1.0, -t], [0.0, 1.0, -t],
        [t, 0.0, -1.0], [t, 0.0, 1.0], [-t, 0.0, -1.0], [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<[f64; 3]>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (verts[a as usize], verts[b as usize]);
                verts.push(normalize([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let positions = verts
        .iter()
        .map(|v| {
            [
                (f64::from(center[0]) + v[0] * f64::from(radius)) as f32,
                (f64::from(center[1]) + v[1] * f64::from(radius)) as f32,
                (f64::from(center[2]) + v[2] * f64::from(radius)) as f32,
            ]
        })
        .collect();
    (positions, faces.into_iter().flatten().collect())
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / len, v[1] / len, v[2] / len]
}

pub const BODY_SIZE: [f64; 3] = [1.0, 0.6, 0.8];
pub const DOME_RADIUS: f32 = 0.3;

/// Shape of the stand-in "building": a grid-tessellated box with an
/// icosphere dome resting in its roof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BuildingParams {
    pub subdivisions: u32,
    /// Box segments along x, y, z. `None` emits the dome alone.
    pub body_segments: Option<[u32; 3]>,
}

impl BuildingParams {
    pub fn dome_only(subdivisions: u32) -> Self {
        Self {
            subdivisions,
            body_segments: None,
        }
    }

    /// Closed form: `20·4^s` for the dome plus `4(ab + bc + ca)` for the box.
    pub fn triangle_count(&self) -> u64 {
        let dome = 20 * 4u64.pow(self.subdivisions);
        let body = self.body_segments.map_or(0, |[a, b, c]| {
            let (a, b, c) = (u64::from(a), u64::from(b), u64::from(c));
            4 * (a * b + b * c + c * a)
        });
        dome + body
    }

    /// Finds parameters that hit `target` triangles exactly, preferring a
    /// detailed dome and a box whose segment counts are within 4x of each other.
    pub fn tuned_to(target: u64) -> Option<Self> {
        let mut fallback = None;
        for s in (0..=7u32).rev() {
            let dome = 20 * 4u64.pow(s);
            if dome > target {
                continue;
            }
            let rest = target - dome;
            if rest == 0 {
                return Some(Self::dome_only(s));
            }
            if rest % 4 != 0 {
                continue;
            }
            let k = rest / 4;
            let mut best: Option<([u64; 3], f64)> = None;
            let mut a = 1;
            while a * a <= k {
                for b in a..=k / a {
                    let ab = a * b;
                    if ab >= k {
                        break;
                    }
                    if (k - ab) % (a + b) == 0 {
                        let c = (k - ab) / (a + b);
                        let lo = a.min(c) as f64;
                        let hi = b.max(c) as f64;
                        let ratio = hi / lo;
                        if best.is_none_or(|(_, r)| ratio < r) {
                            best = Some(([a, b, c], ratio));
                        }
                    }
                }
                a += 1;
            }
            if let Some(([a, b, c], ratio)) = best {
                let params = Self {
                    subdivisions: s,
                    body_segments: Some([a as u32, b as u32, c as u32]),
                };
                if ratio <= 4.0 {
                    return Some(params);
                }
                fallback.get_or_insert(params);
            }
        }
        fallback
    }
}

/// Box body (when requested) and dome as two closed shells in one primitive.
pub fn building(params: &BuildingParams) -> MeshDocument {
    let mut positions: Vec<[f32; 3]> = Vec::new();
    let mut indices: Vec<u32> = Vec::new();
    let [w, h, d] = BODY_SIZE;

    if let Some([a, b, c]) = params.body_segments {
        let x = [w, 0.0, 0.0];
        let y = [0.0, h, 0.0];
        let z = [0.0, 0.0, d];
        // (origin, u, v, nu, nv) with u x v pointing outward
        let faces = [
            ([0.0, 0.0, 0.0], y, x, b, a),
            ([0.0, 0.0, d], x, y, a, b),
            ([0.0, 0.0, 0.0], x, z, a, c),
            ([0.0, h, 0.0], z, x, c, a),
            ([0.0, 0.0, 0.0], z, y, c, b),
            ([w, 0.0, 0.0], y, z, b, c),
        ];
        for (origin, u, v, nu, nv) in faces {
            face_grid(&mut positions, &mut indices, origin, u, v, nu, nv);
        }
    }

    let center = [(w / 2.0) as f32, (h + f64::from(DOME_RADIUS) / 2.0) as f32, (d / 2.0) as f32];
    let (dome_pos, dome_idx) = icosphere_geometry(params.subdivisions, center, DOME_RADIUS);
    let base = positions.len() as u32;
    positions.extend(dome_pos);
    indices.extend(dome_idx.into_iter().map(|i| i + base));

    MeshDocument {
        generator: Some("heritage3d mock mesh backend".into()),
        meshes: vec![Mesh {
            name: Some("building".into()),
            primitives: vec![Primitive::new(positions, indices)],
        }],
        nodes: vec![Node {
            name: Some("building".into()),
            mesh: Some(0),
            ..Node::default()
        }],
        scene: Some(vec![0]),
        ..MeshDocument::default()
    }
}

fn face_grid(
    positions: &mut Vec<[f32; 3]>,
    indices: &mut Vec<u32>,
    origin: [f64; 3],
    u: [f64; 3],
    v: [f64; 3],
    nu: u32,
    nv: u32,
) {
    let base = positions.len() as u32;
    for j in 0..=nv {
        for i in 0..=nu {
            let (fu, fv) = (f64::from(i) / f64::from(nu), f64::from(j) / f64::from(nv));
            positions.push([0, 1, 2].map(|k| (origin[k] + u[k] * fu + v[k] * fv) as f32));
        }
    }
    let at = |i: u32, j: u32| base + j * (nu + 1) + i;
    for j in 0..nv {
        for i in 0..nu {
            let (v00, v10, v11, v01) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            indices.extend([v00, v10, v11, v00, v11, v01]);
        }
    }
}
