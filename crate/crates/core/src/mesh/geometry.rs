use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MeshDocument, MeshError};

/// Positions closer than this (per axis, model units) are treated as one vertex.
pub const WELD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a [f64; 3]>) -> Option<Aabb> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in iter {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min.map(|v| v - margin),
            max: self.max.map(|v| v + margin),
        }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && other.max[k] <= self.max[k])
    }

    pub fn contains_point(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }
}

/// All scene instances flattened into world space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldGeometry {
    pub positions: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

/// Flattens every instanced primitive into world space. Triangles that
/// reference missing vertices are skipped; [`super::validate`] reports them.
pub fn world_geometry(doc: &MeshDocument) -> WorldGeometry {
    let mut out = WorldGeometry::default();
    for (mesh_idx, matrix) in doc.instances() {
        for prim in &doc.meshes[mesh_idx].primitives {
            let base = out.positions.len();
            let n = prim.positions.len();
            out.positions
                .extend(prim.positions.iter().map(|&p| matrix.transform_point(p)));
            out.triangles.extend(
                prim.triangles()
                    .filter(|t| t.iter().all(|&i| (i as usize) < n))
                    .map(|t| t.map(|i| base + i as usize)),
            );
        }
    }
    out
}

/// Merges positions within `tolerance` of each other, keeping first-seen order.
/// Returns the unique positions and, for each input, its index among them.
pub fn weld_positions(positions: &[[f64; 3]], tolerance: f64) -> (Vec<[f64; 3]>, Vec<usize>) {
    let cell = |v: f64| (v / tolerance).floor() as i64;
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut unique: Vec<[f64; 3]> = Vec::new();
    let mut remap = Vec::with_capacity(positions.len());
    for p in positions {
        let key = p.map(cell);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let k = [key[0].saturating_add(dx), key[1].saturating_add(dy), key[2].saturating_add(dz)];
                    if let Some(bucket) = grid.get(&k) {
                        for &u in bucket {
                            let q = unique[u];
                            if (0..3).all(|a| (q[a] - p[a]).abs() <= tolerance) {
                                found = Some(u);
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        let idx = found.unwrap_or_else(|| {
            unique.push(*p);
            grid.entry(key).or_default().push(unique.len() - 1);
            unique.len() - 1
        });
        remap.push(idx);
    }
    (unique, remap)
}

/// World-space bounds of every instanced vertex.
pub fn bounding_box(doc: &MeshDocument) -> Result<Aabb, MeshError> {
    let geo = world_geometry(doc);
    Aabb::from_points(&geo.positions).ok_or(MeshError::NoVertices)
}

/// True when every undirected edge of the welded world-space mesh is used by
/// exactly two triangles. A mesh without triangles has no boundary and is
/// reported as watertight.
pub fn is_watertight(doc: &MeshDocument) -> bool {
    let geo = world_geometry(doc);
    let (_, remap) = weld_positions(&geo.positions, WELD_TOLERANCE);
    let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
    for tri in &geo.triangles {
        let [a, b, c] = tri.map(|i| remap[i]);
        for (u, v) in [(a, b), (b, c), (c, a)] {
            *edges.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    edges.values().all(|&n| n == 2)
}

/// Number of distinct undirected edges after welding; used by Euler checks.
#[cfg(test)]
pub(crate) fn edge_count(geo: &WorldGeometry) -> usize {
    let (_, remap) = weld_positions(&geo.positions, WELD_TOLERANCE);
    let mut edges = std::collections::HashSet::new();
    for tri in &geo.triangles {
        let [a, b, c] = tri.map(|i| remap[i]);
        for (u, v) in [(a, b), (b, c), (c, a)] {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    edges.len()
}
