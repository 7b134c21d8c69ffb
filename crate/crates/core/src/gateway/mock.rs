//! Deterministic offline stand-ins for the two generator services.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use sha2::{Digest, Sha256};

use super::OUTPUT_SIZE_PX;
use crate::mesh::shapes::{building, BuildingParams};
use crate::mesh::{write_gltf, Container, TRIANGLE_BUDGET};

const BACKGROUND: Rgb<u8> = Rgb([236, 236, 232]);

/// Seed for the image mock: prompt text plus reference ids in sorted order.
pub fn image_seed(prompt: &str, reference_ids: &[&str]) -> [u8; 32] {
    let mut ids = reference_ids.to_vec();
    ids.sort_unstable();
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    for id in ids {
        h.update(b"\n");
        h.update(id.as_bytes());
    }
    h.finalize().into()
}

/// Flat-shaded isometric box with a pyramid or dome roof on a neutral
/// background, encoded as a 1024x1024 PNG.
pub fn render_isometric(seed: &[u8; 32]) -> Vec<u8> {
    let size = OUTPUT_SIZE_PX;
    let mut img = RgbImage::from_pixel(size, size, BACKGROUND);

    let unit = |i: usize| f64::from(seed[i]) / 255.0;
    let (w, d, h) = (0.8 + 0.6 * unit(0), 0.8 + 0.6 * unit(1), 0.5 + 0.7 * unit(2));
    let base = Rgb([120 + seed[3] / 3, 100 + seed[4] / 3, 80 + seed[5] / 3]);
    let shade = |c: Rgb<u8>, f: f64| Rgb(c.0.map(|v| (f64::from(v) * f).min(255.0) as u8));

    let scale = f64::from(size) * 0.28;
    let (cx, cy) = (f64::from(size) / 2.0, f64::from(size) * 0.62);
    let (c30, s30) = (30f64.to_radians().cos(), 0.5);
    let project = |x: f64, y: f64, z: f64| -> (f64, f64) {
        let (x, z) = (x - w / 2.0, z - d / 2.0);
        (cx + (x - z) * c30 * scale, cy + (x + z) * s30 * scale - y * scale)
    };

    let p = |x, y, z| project(x, y, z);
    fill_convex(&mut img, &[p(0.0, 0.0, d), p(w, 0.0, d), p(w, h, d), p(0.0, h, d)], shade(base, 0.75));
    fill_convex(&mut img, &[p(w, 0.0, 0.0), p(w, 0.0, d), p(w, h, d), p(w, h, 0.0)], shade(base, 0.95));
    fill_convex(&mut img, &[p(0.0, h, 0.0), p(w, h, 0.0), p(w, h, d), p(0.0, h, d)], shade(base, 1.2));

    let roof = Rgb([90 + seed[6] / 2, 70 + seed[7] / 3, 50]);
    if seed[8] % 2 == 0 {
        let apex = p(w / 2.0, h + 0.35 + 0.3 * unit(9), d / 2.0);
        fill_convex(&mut img, &[p(0.0, h, d), p(w, h, d), apex], shade(roof, 0.8));
        fill_convex(&mut img, &[p(w, h, d), p(w, h, 0.0), apex], shade(roof, 1.05));
    } else {
        let r = 0.25 * w.min(d);
        let (ox, oy) = p(w / 2.0, h, d / 2.0);
        fill_disc(&mut img, (ox, oy - r * scale * 0.4), r * scale, shade(roof, 1.1));
    }

    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encodes");
    out.into_inner()
}

fn fill_convex(img: &mut RgbImage, poly: &[(f64, f64)], colour: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let min_x = poly.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_x = poly.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(f64::from(w - 1)) as u32;
    let min_y = poly.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_y = poly.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(f64::from(h - 1)) as u32;
    let inside = |x: f64, y: f64| {
        let mut sign = 0.0;
        for (i, a) in poly.iter().enumerate() {
            let b = poly[(i + 1) % poly.len()];
            let cross = (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
            if cross != 0.0 {
                if sign != 0.0 && cross.signum() != sign {
                    return false;
                }
                sign = cross.signum();
            }
        }
        true
    };
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            if inside(f64::from(x) + 0.5, f64::from(y) + 0.5) {
                img.put_pixel(x, y, colour);
            }
        }
    }
}

fn fill_disc(img: &mut RgbImage, centre: (f64, f64), radius: f64, colour: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let y0 = (centre.1 - radius).max(0.0) as u32;
    let y1 = ((centre.1 + radius) as u32).min(h - 1);
    let x0 = (centre.0 - radius).max(0.0) as u32;
    let x1 = ((centre.0 + radius) as u32).min(w - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dx = f64::from(x) + 0.5 - centre.0;
            let dy = f64::from(y) + 0.5 - centre.1;
            // only the upper half reads as a dome
            if dx * dx + dy * dy <= radius * radius && dy <= 0.0 {
                img.put_pixel(x, y, colour);
            }
        }
    }
}

/// Building parameters derived from the input asset id: dome subdivision
/// 4..=6 and a box tessellation that keeps the total inside the triangle
/// budget.
pub fn mesh_params_for(asset_id: &str) -> BuildingParams {
    let seed: [u8; 32] = Sha256::digest(asset_id.as_bytes()).into();
    let subdivisions = 4 + u32::from(seed[0] % 3);
    let dome = 20 * 4u64.pow(subdivisions);
    let lo = *TRIANGLE_BUDGET.start() as u64;
    let hi = *TRIANGLE_BUDGET.end() as u64;
    // a cubic n x n x n tessellation adds 12 n^2 triangles
    let n_min = (((lo.saturating_sub(dome)) as f64 / 12.0).sqrt().ceil() as u64).max(1);
    let n_max = (((hi - dome) as f64 / 12.0).sqrt().floor()) as u64;
    let span = n_max - n_min + 1;
    let n = n_min + u64::from(u16::from_le_bytes([seed[1], seed[2]])) % span;
    BuildingParams {
        subdivisions,
        body_segments: Some([n as u32; 3]),
    }
}

/// GLB bytes for the mock mesh.
pub fn render_mesh(params: &BuildingParams) -> Vec<u8> {
    write_gltf(&building(params), Container::Glb).expect("procedural building is valid")
}
