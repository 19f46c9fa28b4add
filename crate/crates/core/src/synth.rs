//! Seeded synthetic datasets: red elliptical "animals" on a noisy
//! blue-gray ground, matched to the mock blob detector.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::raster;
use crate::types::{BBox, Detection, RasterImage};

pub const BLOB_RED: [u8; 3] = [205, 40, 35];

#[derive(Debug, Clone, PartialEq)]
pub struct BlobDatasetSpec {
    pub n_images: usize,
    /// The last `n_without_blobs` images contain no blobs.
    pub n_without_blobs: usize,
    pub width: u32,
    pub height: u32,
    pub blobs_per_image: (usize, usize),
    /// Semi-axis range in pixels; 12..=20 keeps every blob above a 0.40
    /// threshold under the mock detector's `area / 1000` confidence.
    pub radius: (u32, u32),
    /// Adds one small blob per image, below a 0.40 threshold.
    pub decoys: bool,
    pub seed: u64,
}

impl Default for BlobDatasetSpec {
    fn default() -> Self {
        Self {
            n_images: 10,
            n_without_blobs: 0,
            width: 96,
            height: 96,
            blobs_per_image: (1, 2),
            radius: (12, 20),
            decoys: false,
            seed: 42,
        }
    }
}

fn ground(rng: &mut ChaCha8Rng, width: u32, height: u32) -> RasterImage {
    let base = [rng.gen_range(60..100), rng.gen_range(90..130), rng.gen_range(110..150)];
    let mut img = RasterImage::filled(width, height, base).expect("dims >= 1");
    for y in 0..height {
        for x in 0..width {
            let px = base.map(|c: u8| (c as i16 + rng.gen_range(-8i16..=8)).clamp(0, 255) as u8);
            img.set_pixel(x, y, px);
        }
    }
    img
}

fn ellipse_box(cx: i64, cy: i64, rx: u32, ry: u32) -> BBox {
    BBox::new(cx - rx as i64, cy - ry as i64, 2 * rx + 1, 2 * ry + 1)
}

fn paint_ellipse(img: &mut RasterImage, cx: i64, cy: i64, rx: u32, ry: u32) {
    let (rx2, ry2) = ((rx * rx) as i64, (ry * ry) as i64);
    for y in (cy - ry as i64)..=(cy + ry as i64) {
        for x in (cx - rx as i64)..=(cx + rx as i64) {
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx * ry2 + dy * dy * rx2 <= rx2 * ry2 {
                img.set_pixel(x as u32, y as u32, BLOB_RED);
            }
        }
    }
}

/// Boxes must stay 2 px apart so blobs never merge into one component.
fn overlaps(a: &BBox, b: &BBox) -> bool {
    let gap = 2;
    a.x - gap < b.x + b.w as i64 && b.x - gap < a.x + a.w as i64 && a.y - gap < b.y + b.h as i64 && b.y - gap < a.y + a.h as i64
}

/// One image with `n_blobs` blobs, plus a decoy if requested.
pub fn blob_image(rng: &mut ChaCha8Rng, spec: &BlobDatasetSpec, n_blobs: usize) -> RasterImage {
    let mut img = ground(rng, spec.width, spec.height);
    let mut placed: Vec<BBox> = Vec::new();
    let mut sizes: Vec<(u32, u32)> = (0..n_blobs)
        .map(|_| (rng.gen_range(spec.radius.0..=spec.radius.1), rng.gen_range(spec.radius.0..=spec.radius.1)))
        .collect();
    if spec.decoys {
        sizes.push((4, 3));
    }
    for (rx, ry) in sizes {
        for _ in 0..200 {
            let (w, h) = (spec.width as i64, spec.height as i64);
            if 2 * rx as i64 + 3 > w || 2 * ry as i64 + 3 > h {
                break;
            }
            let cx = rng.gen_range(rx as i64 + 1..w - rx as i64 - 1);
            let cy = rng.gen_range(ry as i64 + 1..h - ry as i64 - 1);
            let b = ellipse_box(cx, cy, rx, ry);
            if placed.iter().all(|p| !overlaps(p, &b)) {
                paint_ellipse(&mut img, cx, cy, rx, ry);
                placed.push(b);
                break;
            }
        }
    }
    img
}

/// Writes `img000.png ...` and `manifest.json` under `dir`; returns the
/// manifest path.
pub fn write_blob_dataset(dir: impl AsRef<Path>, spec: &BlobDatasetSpec) -> Result<PathBuf> {
    if spec.n_without_blobs > spec.n_images {
        return Err(Error::InvalidArgument("n_without_blobs exceeds n_images".into()));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entries = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let with_blobs = i < spec.n_images - spec.n_without_blobs;
        let n = if with_blobs {
            rng.gen_range(spec.blobs_per_image.0..=spec.blobs_per_image.1)
        } else {
            0
        };
        let img = blob_image(&mut rng, spec, n);
        let id = format!("img{i:03}");
        let path = dir.join(format!("{id}.png"));
        raster::write_image(&img, &path)?;
        let truth: Vec<Detection> = crate::backends::mock::connected_components(&crate::backends::mock::blob_pixels(&img))
            .into_iter()
            .map(|(b, _)| Detection::new("seal", b, 1.0))
            .collect();
        entries.push(ManifestEntry {
            image_id: id,
            path,
            annotations: Some(truth),
        });
    }
    let manifest_path = dir.join("manifest.json");
    DatasetManifest { entries }.save(&manifest_path)?;
    Ok(manifest_path)
}
