//! Reference data used by tests, examples and the CLI's `--fixture` flag.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};

use crate::catalog::SiteRecord;
use crate::metrics::BaselineHours;
use crate::prompt::AttributeSet;

pub use crate::metrics::{benchmark_rows, BENCHMARK_CSV};

/// Edge length of [`street_view_png`] images.
pub const STREET_VIEW_SIZE: u32 = 64;

pub fn choto_sona_site() -> SiteRecord {
    SiteRecord {
        site_type: "Single-domed mosque".into(),
        material: "Gray sandstone".into(),
        features: vec![
            "Bronze dome top".into(),
            "carved façade".into(),
            "ornamental lattice".into(),
        ],
        location: "Gaur, Naogaon".into(),
        baseline_hours: Some(BaselineHours { low: 4.0, high: 6.0 }),
        ..SiteRecord::new("Choto Sona Mosque, Gaur, Naogaon")
    }
}

pub fn choto_sona_attributes() -> AttributeSet {
    AttributeSet::from_site(&choto_sona_site())
}

/// Small synthetic street-level photo; distinct bytes per `seed`.
pub fn street_view_png(seed: u32) -> Vec<u8> {
    let n = STREET_VIEW_SIZE;
    let img = RgbImage::from_fn(n, n, |x, y| {
        if y < n / 3 {
            Rgb([120, 170, 220])
        } else {
            let v = ((x * 7 + y * 3 + seed * 13) % 64) as u8;
            Rgb([110 + v, 105 + v, 100 + (seed % 50) as u8])
        }
    });
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("png encodes");
    out.into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn street_view_images_differ_by_seed() {
        assert_ne!(street_view_png(0), street_view_png(90));
        assert_eq!(street_view_png(5), street_view_png(5));
    }
}
