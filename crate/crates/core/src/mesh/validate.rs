use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::geometry::{bounding_box, is_watertight, Aabb};
use super::{MeshDocument, GLTF_VERSION};

/// Triangle count expected from the image-to-3D generator.
pub const TRIANGLE_BUDGET: RangeInclusive<usize> = 50_000..=100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCode {
    UnsupportedVersion,
    IndexOutOfRange,
    IndexCountNotTriangles,
    EmptyPrimitive,
    AttributeLengthMismatch,
    NonFinitePosition,
    MeshOutOfRange,
    NodeOutOfRange,
    NodeMultipleParents,
    NodeCycle,
    MaterialOutOfRange,
    TriangleBudget,
    NotWatertight,
    UnsupportedExtension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

impl Issue {
    fn new(code: IssueCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
    pub triangle_count: usize,
    pub budget_ok: bool,
    pub bbox: Option<Aabb>,
    pub watertight: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error_codes(&self) -> Vec<IssueCode> {
        self.errors.iter().map(|i| i.code).collect()
    }

    pub fn warning_codes(&self) -> Vec<IssueCode> {
        self.warnings.iter().map(|i| i.code).collect()
    }
}

/// Structural problems are errors; budget and closure problems are warnings.
pub fn validate(doc: &MeshDocument) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    if doc.asset_version != GLTF_VERSION {
        errors.push(Issue::new(
            IssueCode::UnsupportedVersion,
            format!("asset version {:?} is not \"2.0\"", doc.asset_version),
        ));
    }

    let material_count = doc
        .passthrough
        .get("materials")
        .and_then(|m| m.as_array())
        .map_or(0, Vec::len);

    for (mi, mesh) in doc.meshes.iter().enumerate() {
        for (pi, prim) in mesh.primitives.iter().enumerate() {
            let at = format!("mesh {mi} primitive {pi}");
            let n = prim.positions.len();
            if n == 0 || prim.indices.is_empty() {
                errors.push(Issue::new(IssueCode::EmptyPrimitive, format!("{at} has no triangles")));
            }
            if prim.indices.len() % 3 != 0 {
                errors.push(Issue::new(
                    IssueCode::IndexCountNotTriangles,
                    format!("{at} has {} indices, not a multiple of 3", prim.indices.len()),
                ));
            }
            if let Some(bad) = prim.indices.iter().find(|&&i| i as usize >= n) {
                errors.push(Issue::new(
                    IssueCode::IndexOutOfRange,
                    format!("{at} references vertex {bad} but has {n} vertices"),
                ));
            }
            if prim.positions.iter().flatten().any(|v| !v.is_finite()) {
                errors.push(Issue::new(IssueCode::NonFinitePosition, format!("{at} has a non-finite position")));
            }
            let normals_bad = prim.normals.as_ref().is_some_and(|v| v.len() != n);
            let uv_bad = prim.texcoords.as_ref().is_some_and(|v| v.len() != n);
            if normals_bad || uv_bad {
                errors.push(Issue::new(
                    IssueCode::AttributeLengthMismatch,
                    format!("{at} has vertex attributes whose length differs from POSITION"),
                ));
            }
            if let Some(m) = prim.material {
                if m >= material_count {
                    errors.push(Issue::new(
                        IssueCode::MaterialOutOfRange,
                        format!("{at} uses material {m} of {material_count}"),
                    ));
                }
            }
        }
    }

    check_hierarchy(doc, &mut errors);

    for ext in &doc.extensions_used {
        warnings.push(Issue::new(
            IssueCode::UnsupportedExtension,
            format!("extension {ext} is carried through but not interpreted"),
        ));
    }

    let triangle_count = doc.triangle_count();
    let budget_ok = TRIANGLE_BUDGET.contains(&triangle_count);
    if !budget_ok {
        warnings.push(Issue::new(
            IssueCode::TriangleBudget,
            format!(
                "{triangle_count} triangles is outside the expected {}..={}",
                TRIANGLE_BUDGET.start(),
                TRIANGLE_BUDGET.end()
            ),
        ));
    }
    let watertight = is_watertight(doc);
    if !watertight {
        warnings.push(Issue::new(IssueCode::NotWatertight, "mesh has boundary or non-manifold edges"));
    }

    ValidationReport {
        errors,
        warnings,
        triangle_count,
        budget_ok,
        bbox: bounding_box(doc).ok(),
        watertight,
    }
}

fn check_hierarchy(doc: &MeshDocument, errors: &mut Vec<Issue>) {
    let n = doc.nodes.len();
    let mut parents = vec![0usize; n];
    for (i, node) in doc.nodes.iter().enumerate() {
        if let Some(m) = node.mesh {
            if m >= doc.meshes.len() {
                errors.push(Issue::new(
                    IssueCode::MeshOutOfRange,
                    format!("node {i} references mesh {m} of {}", doc.meshes.len()),
                ));
            }
        }
        for &c in &node.children {
            match parents.get_mut(c) {
                Some(count) => *count += 1,
                None => errors.push(Issue::new(
                    IssueCode::NodeOutOfRange,
                    format!("node {i} has missing child {c}"),
                )),
            }
        }
    }
    if let Some(i) = parents.iter().position(|&p| p > 1) {
        errors.push(Issue::new(IssueCode::NodeMultipleParents, format!("node {i} has several parents")));
    }
    if let Some(roots) = &doc.scene {
        for &r in roots {
            if r >= n {
                errors.push(Issue::new(IssueCode::NodeOutOfRange, format!("scene root {r} does not exist")));
            }
        }
    }
    // iterative three-colour DFS
    let mut colour = vec![0u8; n];
    for start in 0..n {
        if colour[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        colour[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let children = &doc.nodes[node].children;
            if *next < children.len() {
                let child = children[*next];
                *next += 1;
                if child >= n {
                    continue;
                }
                match colour[child] {
                    0 => {
                        colour[child] = 1;
                        stack.push((child, 0));
                    }
                    1 => {
                        errors.push(Issue::new(IssueCode::NodeCycle, format!("node hierarchy has a cycle through node {child}")));
                        return;
                    }
                    _ => {}
                }
            } else {
                colour[node] = 2;
                stack.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{shapes, Node};

    #[test]
    fn cube_report() {
        let r = validate(&shapes::unit_cube());
        assert!(r.errors.is_empty());
        assert_eq!(r.triangle_count, 12);
        assert!(!r.budget_ok);
        assert_eq!(r.warning_codes(), vec![IssueCode::TriangleBudget]);
        assert!(r.watertight);
        let b = r.bbox.unwrap();
        assert_eq!((b.min, b.max), ([0.0; 3], [1.0; 3]));
    }

    #[test]
    fn index_equal_to_vertex_count() {
        let mut cube = shapes::unit_cube();
        cube.meshes[0].primitives[0].indices[5] = 8;
        assert_eq!(validate(&cube).error_codes(), vec![IssueCode::IndexOutOfRange]);
    }

    #[test]
    fn tuned_building_is_in_budget() {
        let params = shapes::BuildingParams::tuned_to(60_000).unwrap();
        let r = validate(&shapes::building(&params));
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert_eq!(r.triangle_count, 60_000);
        assert!(r.budget_ok);
        assert!(r.watertight);
    }

    #[test]
    fn hierarchy_errors() {
        let mut doc = shapes::unit_cube();
        doc.nodes.push(Node {
            children: vec![2],
            ..Node::default()
        });
        doc.nodes.push(Node {
            children: vec![1],
            mesh: Some(4),
            ..Node::default()
        });
        let codes = validate(&doc).error_codes();
        assert!(codes.contains(&IssueCode::NodeCycle));
        assert!(codes.contains(&IssueCode::MeshOutOfRange));
    }

    #[test]
    fn structural_shape_errors() {
        let mut cube = shapes::unit_cube();
        cube.meshes[0].primitives[0].indices.pop();
        cube.meshes[0].primitives[0].normals = Some(vec![[0.0; 3]; 3]);
        cube.meshes[0].primitives[0].material = Some(0);
        let codes = validate(&cube).error_codes();
        assert!(codes.contains(&IssueCode::IndexCountNotTriangles));
        assert!(codes.contains(&IssueCode::AttributeLengthMismatch));
        assert!(codes.contains(&IssueCode::MaterialOutOfRange));

        let mut v1 = shapes::unit_cube();
        v1.asset_version = "1.0".into();
        assert_eq!(validate(&v1).error_codes(), vec![IssueCode::UnsupportedVersion]);
    }
}
