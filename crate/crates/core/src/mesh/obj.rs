use super::geometry::{weld_positions, world_geometry, WELD_TOLERANCE};
use super::{validate, MeshDocument, MeshError};

/// Wavefront OBJ export: welded world-space `v` records followed by `f`
/// records with 1-based indices, LF line endings.
pub fn export_obj(doc: &MeshDocument) -> Result<Vec<u8>, MeshError> {
    let report = validate(doc);
    if let Some(first) = report.errors.first() {
        return Err(MeshError::Invalid(first.message.clone()));
    }
    let geo = world_geometry(doc);
    let (unique, remap) = weld_positions(&geo.positions, WELD_TOLERANCE);
    let mut out = String::with_capacity(unique.len() * 24 + geo.triangles.len() * 20);
    for p in &unique {
        out.push_str(&format!("v {} {} {}\n", coord(p[0]), coord(p[1]), coord(p[2])));
    }
    for t in &geo.triangles {
        let [a, b, c] = t.map(|i| remap[i] + 1);
        out.push_str(&format!("f {a} {b} {c}\n"));
    }
    Ok(out.into_bytes())
}

/// Shortest single-precision text that round-trips; negative zero prints as `0`.
fn coord(v: f64) -> String {
    let f = v as f32;
    if f == 0.0 {
        "0".to_string()
    } else {
        f.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<[f64; 3]>,
    /// 0-based triangles; polygons are fan-triangulated.
    pub faces: Vec<[usize; 3]>,
}

/// Reads `v` and `f` records; other record types are ignored.
pub fn parse_obj(bytes: &[u8]) -> Result<ObjMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::Obj {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut mesh = ObjMesh::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| MeshError::Obj { line, reason };
        let mut parts = raw.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| err(e.to_string())))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs 3 coordinates".into()));
                }
                mesh.positions.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let n = mesh.positions.len() as i64;
                let idx: Vec<usize> = parts
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let k: i64 = head.parse().map_err(|_| err(format!("bad face index {s:?}")))?;
                        let resolved = if k < 0 { n + k } else { k - 1 };
                        if resolved < 0 || resolved >= n {
                            return Err(err(format!("face index {k} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    mesh.faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}
