//! Uniform vertex-clustering decimation.
//!
//! Vertices are binned into cubic cells spanning the world-space bounding box,
//! each occupied cell collapses to the centroid of its members, and triangles
//! whose corners land in fewer than three distinct cells are dropped.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::geometry::{world_geometry, Aabb, WorldGeometry};
use super::{validate, MeshDocument, MeshError};

/// Upper bound on grid resolution (cells along the longest axis).
const MAX_RESOLUTION: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecimateStats {
    pub input_triangles: usize,
    pub output_triangles: usize,
    /// Cells along the longest bounding-box axis.
    pub resolution: u32,
    /// Edge length of one cubic cell in model units.
    pub cell_size: f64,
}

impl DecimateStats {
    pub fn cell_diagonal(&self) -> f64 {
        self.cell_size * 3f64.sqrt()
    }
}

/// Reduces `doc` to at most `target` triangles. Documents already within the
/// target come back unchanged; otherwise the result is a single world-space
/// mesh (hierarchy, materials and vertex attributes other than position are
/// not carried over).
pub fn decimate(doc: &MeshDocument, target: usize) -> Result<MeshDocument, MeshError> {
    decimate_with_stats(doc, target).map(|(d, _)| d)
}

/// [`decimate`], also reporting the grid that was used (`None` on the no-op path).
pub fn decimate_with_stats(
    doc: &MeshDocument,
    target: usize,
) -> Result<(MeshDocument, Option<DecimateStats>), MeshError> {
    if target == 0 {
        return Err(MeshError::Invalid("decimation target must be at least 1".into()));
    }
    if let Some(first) = validate(doc).errors.first() {
        return Err(MeshError::Invalid(first.message.clone()));
    }
    let input_triangles = doc.triangle_count();
    if input_triangles <= target {
        return Ok((doc.clone(), None));
    }
    let geo = world_geometry(doc);
    let bounds = Aabb::from_points(&geo.positions).ok_or(MeshError::NoVertices)?;

    // Refine from one cell upward, keeping the finest grid within budget.
    let mut best = cluster(&geo, &bounds, 1);
    let mut resolution = 2;
    let mut over = None;
    // a zero-extent mesh collapses to one cell at every resolution
    while resolution <= MAX_RESOLUTION && cell_size(&bounds, 1) > 0.0 {
        let candidate = cluster(&geo, &bounds, resolution);
        if candidate.triangles.len() > target {
            over = Some(resolution);
            break;
        }
        best = candidate;
        resolution *= 2;
    }
    // then bisect between the last grid within budget and the first over it
    if let Some(mut hi) = over {
        while hi - best.resolution > 1 {
            let mid = best.resolution + (hi - best.resolution) / 2;
            let candidate = cluster(&geo, &bounds, mid);
            if candidate.triangles.len() > target {
                hi = mid;
            } else {
                best = candidate;
            }
        }
    }
    let stats = DecimateStats {
        input_triangles,
        output_triangles: best.triangles.len(),
        resolution: best.resolution,
        cell_size: cell_size(&bounds, best.resolution),
    };
    let mut out = best.into_document();
    out.generator = doc.generator.clone();
    Ok((out, Some(stats)))
}

/// One clustering pass at a fixed resolution, without a triangle target.
pub fn cluster_vertices(doc: &MeshDocument, resolution: u32) -> Result<MeshDocument, MeshError> {
    if resolution == 0 {
        return Err(MeshError::Invalid("grid resolution must be at least 1".into()));
    }
    let geo = world_geometry(doc);
    let bounds = Aabb::from_points(&geo.positions).ok_or(MeshError::NoVertices)?;
    let mut out = cluster(&geo, &bounds, resolution).into_document();
    out.generator = doc.generator.clone();
    Ok(out)
}

fn cell_size(bounds: &Aabb, resolution: u32) -> f64 {
    let longest = bounds.extent().into_iter().fold(0.0, f64::max);
    longest / f64::from(resolution)
}

struct Clustered {
    resolution: u32,
    positions: Vec<[f64; 3]>,
    triangles: Vec<[u32; 3]>,
}

impl Clustered {
    fn into_document(self) -> MeshDocument {
        if self.triangles.is_empty() {
            return MeshDocument {
                scene: Some(Vec::new()),
                ..MeshDocument::default()
            };
        }
        let positions = self.positions.iter().map(|p| p.map(|v| v as f32)).collect();
        let indices = self.triangles.into_iter().flatten().collect();
        MeshDocument::from_triangles(positions, indices)
    }
}

fn cluster(geo: &WorldGeometry, bounds: &Aabb, resolution: u32) -> Clustered {
    let size = cell_size(bounds, resolution);
    let max_cell = i64::from(resolution) - 1;
    let cell_of = |p: &[f64; 3]| -> [i64; 3] {
        std::array::from_fn(|k| {
            if size == 0.0 {
                0
            } else {
                (((p[k] - bounds.min[k]) / size).floor() as i64).clamp(0, max_cell)
            }
        })
    };

    let mut cell_index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<([f64; 3], u32)> = Vec::new();
    let vertex_cluster: Vec<usize> = geo
        .positions
        .iter()
        .map(|p| {
            let id = *cell_index.entry(cell_of(p)).or_insert_with(|| {
                sums.push(([0.0; 3], 0));
                sums.len() - 1
            });
            let (acc, n) = &mut sums[id];
            for k in 0..3 {
                acc[k] += p[k];
            }
            *n += 1;
            id
        })
        .collect();

    let mut seen = HashSet::new();
    let mut remap: HashMap<usize, u32> = HashMap::new();
    let mut positions = Vec::new();
    let mut triangles = Vec::new();
    for tri in &geo.triangles {
        let [a, b, c] = tri.map(|v| vertex_cluster[v]);
        if a == b || b == c || a == c {
            continue;
        }
        let mut key = [a, b, c];
        key.sort_unstable();
        if !seen.insert(key) {
            continue;
        }
        let out = [a, b, c].map(|cl| {
            *remap.entry(cl).or_insert_with(|| {
                let (acc, n) = sums[cl];
                positions.push(acc.map(|s| s / f64::from(n)));
                (positions.len() - 1) as u32
            })
        });
        triangles.push(out);
    }
    Clustered {
        resolution,
        positions,
        triangles,
    }
}
