//! Mesh checks on a synthetic building: validation, the triangle budget,
//! decimation, and GLB / OBJ export.
//!
//! ```text
//! cargo run --example mesh_toolkit
//! ```

use heritage3d::mesh::shapes::{building, BuildingParams};
use heritage3d::mesh::{
    bounding_box, decimate_with_stats, export_obj, is_watertight, parse_gltf, parse_obj, validate, write_gltf, Container,
    TRIANGLE_BUDGET,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = BuildingParams {
        subdivisions: 4,
        body_segments: Some([8, 6, 4]),
    };
    let doc = building(&params);
    let report = validate(&doc);
    println!(
        "building: {} triangles (closed form {}), watertight {}, budget {:?} ok {}",
        report.triangle_count,
        params.triangle_count(),
        report.watertight,
        TRIANGLE_BUDGET,
        report.budget_ok
    );
    for w in &report.warnings {
        println!("  warning {:?}: {}", w.code, w.message);
    }

    let (small, stats) = decimate_with_stats(&doc, 1000)?;
    let stats = stats.expect("over target, so a grid was used");
    let before = bounding_box(&doc)?;
    let after = bounding_box(&small)?;
    println!(
        "decimated: {} -> {} triangles, cell {:.3}, bbox grows by at most {:.3}: {}",
        stats.input_triangles,
        stats.output_triangles,
        stats.cell_size,
        stats.cell_diagonal(),
        before.expanded(stats.cell_diagonal()).contains(&after)
    );

    let glb = write_gltf(&small, Container::Glb)?;
    let back = parse_gltf(&glb)?;
    println!("glb: {} bytes, round trip equal {}", glb.len(), back == small);

    let obj = export_obj(&small)?;
    let parsed = parse_obj(&obj)?;
    println!(
        "obj: {} vertices, {} faces, watertight {}",
        parsed.positions.len(),
        parsed.faces.len(),
        is_watertight(&small)
    );
    Ok(())
}
