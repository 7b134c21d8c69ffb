#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heritage3d::fixtures;
use heritage3d::mesh::{ImageData, ImageSource, Mesh, MeshDocument, Node, Primitive, Transform};
use proptest::prelude::*;
use serde_json::json;

/// Smallest arc holding every azimuth, by brute force: for each view taken as
/// the arc start, the furthest clockwise neighbour fixes the arc length.
pub fn coverage_oracle(azimuths: &[f64]) -> f64 {
    if azimuths.len() < 2 {
        return 0.0;
    }
    let norm: Vec<f64> = azimuths.iter().map(|a| a.rem_euclid(360.0)).collect();
    norm.iter()
        .map(|&start| {
            norm.iter()
                .map(|&a| (a - start).rem_euclid(360.0))
                .fold(0.0, f64::max)
        })
        .fold(360.0, f64::min)
}

fn coord() -> impl Strategy<Value = f32> {
    (-1000i32..1000).prop_map(|v| v as f32 / 8.0)
}

fn vec3() -> impl Strategy<Value = [f32; 3]> {
    [coord(), coord(), coord()]
}

fn primitive() -> impl Strategy<Value = Primitive> {
    (3usize..24).prop_flat_map(|n| {
        (
            proptest::collection::vec(vec3(), n),
            proptest::collection::vec(0..n as u32, 3..=60).prop_map(|mut v| {
                v.truncate(v.len() / 3 * 3);
                v
            }),
            proptest::option::of(proptest::collection::vec(vec3(), n)),
            proptest::option::of(proptest::collection::vec([0f32..1.0, 0f32..1.0], n)),
        )
            .prop_map(|(positions, indices, normals, texcoords)| Primitive {
                positions,
                indices,
                normals,
                texcoords,
                material: None,
            })
    })
}

fn transform() -> impl Strategy<Value = Transform> {
    prop_oneof![
        (vec3(), [coord(), coord(), coord(), coord()], vec3()).prop_map(|(translation, rotation, scale)| {
            Transform::Trs {
                translation,
                rotation,
                scale,
            }
        }),
        proptest::array::uniform16(coord()).prop_map(Transform::Matrix),
    ]
}

fn name() -> impl Strategy<Value = Option<String>> {
    proptest::option::of("[a-zA-Z][a-zA-Z0-9 _-]{0,11}")
}

/// Structurally valid glTF documents: indices in range, node hierarchy a
/// forest, optional scene, images and passthrough material.
pub fn gltf_document() -> impl Strategy<Value = MeshDocument> {
    let meshes = proptest::collection::vec(
        (name(), proptest::collection::vec(primitive(), 1..3)).prop_map(|(name, primitives)| Mesh { name, primitives }),
        1..4,
    );
    (meshes, 1usize..6, name(), any::<bool>(), any::<bool>(), any::<u64>())
        .prop_flat_map(|(meshes, node_count, generator, with_scene, with_material, seed)| {
            let mesh_count = meshes.len();
            (
                Just(meshes),
                proptest::collection::vec(
                    (name(), proptest::option::of(0..mesh_count), transform()),
                    node_count,
                ),
                // parent of node i (i >= 1) is some earlier node, or none
                proptest::collection::vec(proptest::option::of(any::<prop::sample::Index>()), node_count),
                Just((generator, with_scene, with_material, seed)),
            )
        })
        .prop_map(|(mut meshes, node_specs, parents, (generator, with_scene, with_material, seed))| {
            let mut nodes: Vec<Node> = node_specs
                .into_iter()
                .map(|(name, mesh, transform)| Node {
                    name,
                    mesh,
                    children: Vec::new(),
                    transform,
                })
                .collect();
            let mut roots = vec![0];
            for (i, parent) in parents.iter().enumerate().skip(1) {
                match parent {
                    Some(ix) => {
                        let p = ix.index(i);
                        nodes[p].children.push(i);
                    }
                    None => roots.push(i),
                }
            }
            let mut doc = MeshDocument {
                generator,
                nodes,
                scene: with_scene.then_some(roots),
                ..MeshDocument::default()
            };
            if with_material {
                doc.passthrough.insert("materials".into(), json!([{"name": "stone", "doubleSided": true}]));
                meshes[0].primitives[0].material = Some(0);
                doc.images.push(ImageData {
                    name: Some(format!("img{}", seed % 97)),
                    mime_type: Some("image/png".into()),
                    source: if seed % 2 == 0 {
                        ImageSource::Embedded(seed.to_le_bytes().to_vec())
                    } else {
                        ImageSource::Uri(format!("textures/{}.png", seed % 1000))
                    },
                });
                doc.extensions_used.push("KHR_materials_unlit".into());
            }
            doc.meshes = meshes;
            doc
        })
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heritage3d"))
}

pub fn run_cli(data_dir: &Path, args: &[&str]) -> Output {
    bin().arg("--data-dir")
        .arg(data_dir)
        .args(args)
        .env_remove("HERITAGE3D_DATA_DIR")
        .output()
        .expect("spawn heritage3d")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Registers the Choto Sona fixture site through the CLI and ingests four
/// street-view stand-ins at 0, 90, 180 and 270 degrees. Returns the site id.
pub fn seed_fixture_site(data_dir: &Path) -> Result<String, String> {
    let site = fixtures::choto_sona_site();
    let mut args: Vec<String> = vec![
        "site".into(),
        "add".into(),
        "--name".into(),
        site.name.clone(),
        "--type".into(),
        site.site_type.clone(),
        "--material".into(),
        site.material.clone(),
        "--location".into(),
        site.location.clone(),
        "--baseline-hours".into(),
        "4-6".into(),
    ];
    for f in &site.features {
        args.push("--feature".into());
        args.push(f.clone());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run_cli(data_dir, &refs);
    if !out.status.success() {
        return Err(format!("site add failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    let site_id = stdout(&out).trim().to_string();
    let images = data_dir.join("incoming");
    std::fs::create_dir_all(&images).map_err(|e| e.to_string())?;
    for (i, az) in [0, 90, 180, 270].into_iter().enumerate() {
        let path: PathBuf = images.join(format!("view{i}.png"));
        std::fs::write(&path, fixtures::street_view_png(i as u32)).map_err(|e| e.to_string())?;
        let out = run_cli(
            data_dir,
            &[
                "site",
                "ingest",
                "--site",
                &site_id,
                "--azimuth",
                &az.to_string(),
                "--source",
                "street-view-url",
                path.to_str().unwrap(),
            ],
        );
        if !out.status.success() {
            return Err(format!("ingest failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(site_id)
}

/// Counts journal lines per event kind and stage.
pub fn journal_histogram(journal: &Path) -> BTreeMap<String, usize> {
    let text = std::fs::read_to_string(journal).unwrap_or_default();
    let mut h = BTreeMap::new();
    for line in text.lines() {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else { continue };
        let key = format!(
            "{}:{}",
            v["event"].as_str().unwrap_or("?"),
            v["stage"].as_str().unwrap_or("-")
        );
        *h.entry(key).or_insert(0) += 1;
    }
    h
}
