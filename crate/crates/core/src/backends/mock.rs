//! Deterministic stand-ins for the model services.
//!
//! These ship with the library so complete runs can be reproduced without
//! model weights. The synthetic "animals" they understand are saturated red
//! blobs (see [`is_blob_pixel`]).

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BackendError, Detector, InpaintRequest, Inpainter, Segmenter};
use crate::maskops;
use crate::types::{BBox, BinaryMask, Detection, RasterImage};

/// Color predicate for blob pixels: strong red, weak green and blue.
pub fn is_blob_pixel(rgb: [u8; 3]) -> bool {
    rgb[0] >= 150 && rgb[1] <= 100 && rgb[2] <= 100
}

/// Blob pixels, as a mask.
pub fn blob_pixels(image: &RasterImage) -> BinaryMask {
    BinaryMask::from_fn(image.width(), image.height(), |x, y| is_blob_pixel(image.pixel(x, y)))
}

/// 4-connected components of a mask, each as (bounding box, pixel count),
/// in raster order of their first pixel.
pub fn connected_components(mask: &BinaryMask) -> Vec<(BBox, usize)> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w as usize * h as usize];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            let si = (sy * w + sx) as usize;
            if seen[si] || !mask.get(sx, sy) {
                continue;
            }
            seen[si] = true;
            queue.push_back((sx, sy));
            let (mut x0, mut y0, mut x1, mut y1, mut area) = (sx, sy, sx, sy, 0usize);
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                let neighbours = [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ];
                for (nx, ny) in neighbours {
                    if nx < w && ny < h {
                        let ni = (ny * w + nx) as usize;
                        if !seen[ni] && mask.get(nx, ny) {
                            seen[ni] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push((BBox::new(x0 as i64, y0 as i64, x1 - x0 + 1, y1 - y0 + 1), area));
        }
    }
    out
}

/// One detection per red blob, `confidence = min(1, area / 1000)`.
#[derive(Debug, Clone)]
pub struct BlobDetector {
    pub class_label: String,
    pub area_scale: f64,
}

impl Default for BlobDetector {
    fn default() -> Self {
        Self {
            class_label: "seal".into(),
            area_scale: 1000.0,
        }
    }
}

impl Detector for BlobDetector {
    fn identity(&self) -> String {
        format!("mock:blob-detector:{}:{}", self.class_label, self.area_scale)
    }

    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
        Ok(connected_components(&blob_pixels(image))
            .into_iter()
            .map(|(bbox, area)| {
                Detection::new(self.class_label.clone(), bbox, (area as f64 / self.area_scale).min(1.0))
            })
            .collect())
    }
}

/// Mask = the box itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct RectSegmenter;

impl Segmenter for RectSegmenter {
    fn identity(&self) -> String {
        "mock:rect-segmenter".into()
    }

    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        Ok(boxes
            .iter()
            .map(|b| maskops::bbox_to_mask(b, image.width(), image.height()))
            .collect())
    }
}

/// Mask = blob-colored pixels inside the box.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlobSegmenter;

impl Segmenter for BlobSegmenter {
    fn identity(&self) -> String {
        "mock:blob-segmenter".into()
    }

    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        Ok(boxes
            .iter()
            .map(|b| {
                BinaryMask::from_fn(image.width(), image.height(), |x, y| {
                    b.contains(x as i64, y as i64) && is_blob_pixel(image.pixel(x, y))
                })
            })
            .collect())
    }
}

fn mean_color(image: &RasterImage, select: impl Fn(u32, u32) -> bool) -> Option<[u8; 3]> {
    let mut sum = [0u64; 3];
    let mut n = 0u64;
    for y in 0..image.height() {
        for x in 0..image.width() {
            if select(x, y) {
                let p = image.pixel(x, y);
                for c in 0..3 {
                    sum[c] += p[c] as u64;
                }
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum.map(|s| (s as f64 / n as f64).round() as u8))
}

/// Fills the mask with the mean color of the 2-px unmasked ring around it;
/// with no ring (all-true mask) the whole-image mean is used.
#[derive(Debug, Clone, Copy, Default)]
pub struct FillInpainter;

impl FillInpainter {
    pub const RING_PX: u32 = 2;

    pub fn fill_color(image: &RasterImage, mask: &BinaryMask) -> [u8; 3] {
        let ring = maskops::pad(mask, Self::RING_PX);
        mean_color(image, |x, y| ring.get(x, y) && !mask.get(x, y))
            .or_else(|| mean_color(image, |_, _| true))
            .expect("image has at least one pixel")
    }
}

impl Inpainter for FillInpainter {
    fn identity(&self) -> String {
        "mock:fill-inpainter".into()
    }

    fn inpaint_raw(&self, req: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        let color = Self::fill_color(req.image, req.mask);
        let mut out = req.image.clone();
        for y in 0..out.height() {
            for x in 0..out.width() {
                if req.mask.get(x, y) {
                    out.set_pixel(x, y, color);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityInpainter;

impl Inpainter for IdentityInpainter {
    fn identity(&self) -> String {
        "mock:identity-inpainter".into()
    }

    fn inpaint_raw(&self, req: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        Ok(req.image.clone())
    }
}

/// Paints a two-tone "vessel" glyph over the mask: a light upper part and a
/// hull colored from a hash of the target label. Neither color passes
/// [`is_blob_pixel`].
#[derive(Debug, Clone)]
pub struct StampInpainter {
    pub target: String,
}

impl StampInpainter {
    pub const UPPER: [u8; 3] = [235, 235, 225];
    /// Fraction of the mask's bounding box height taken by the upper part.
    pub const UPPER_FRACTION: f64 = 0.45;

    pub fn new(target: impl Into<String>) -> Self {
        Self { target: target.into() }
    }

    pub fn hull_color(target: &str) -> [u8; 3] {
        let h = Sha256::digest(target.as_bytes());
        [40 + h[0] % 80, 40 + h[1] % 80, 40 + h[2] % 80]
    }

    pub fn glyph_color(&self, rel_y: u32, box_h: u32) -> [u8; 3] {
        if (rel_y as f64) < Self::UPPER_FRACTION * box_h as f64 {
            Self::UPPER
        } else {
            Self::hull_color(&self.target)
        }
    }
}

impl Inpainter for StampInpainter {
    fn identity(&self) -> String {
        format!("mock:stamp-inpainter:{}", self.target)
    }

    fn inpaint_raw(&self, req: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        let mut out = req.image.clone();
        let Some(b) = req.mask.bounding_box() else {
            return Ok(out);
        };
        for y in 0..out.height() {
            for x in 0..out.width() {
                if req.mask.get(x, y) {
                    out.set_pixel(x, y, self.glyph_color(y - b.y as u32, b.h));
                }
            }
        }
        Ok(out)
    }
}

/// Fills the mask with seeded noise around a base color derived from the
/// prompt text, so different prompts and seeds give different, repeatable
/// content.
#[derive(Debug, Clone, Copy, Default)]
pub struct TextureInpainter;

impl Inpainter for TextureInpainter {
    fn identity(&self) -> String {
        "mock:texture-inpainter".into()
    }

    fn inpaint_raw(&self, req: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        let mut hasher = Sha256::new();
        hasher.update(req.prompt.as_bytes());
        hasher.update([0]);
        hasher.update(req.negative_prompt.as_bytes());
        hasher.update(req.params.seed.to_le_bytes());
        let digest = hasher.finalize();
        let base = [digest[0], digest[1], digest[2]];
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut out = req.image.clone();
        for y in 0..out.height() {
            for x in 0..out.width() {
                let jitter: [i16; 3] = [rng.gen_range(-16..=16), rng.gen_range(-16..=16), rng.gen_range(-16..=16)];
                if req.mask.get(x, y) {
                    let px = [0, 1, 2].map(|c| (base[c] as i16 + jitter[c]).clamp(0, 255) as u8);
                    out.set_pixel(x, y, px);
                }
            }
        }
        Ok(out)
    }
}

pub fn detector_by_name(name: &str) -> Result<Box<dyn Detector>, BackendError> {
    let name = name.strip_prefix("mock:").unwrap_or(name);
    match name.split_once(':') {
        None if name == "blob-detector" => Ok(Box::new(BlobDetector::default())),
        Some(("blob-detector", class)) if !class.is_empty() => Ok(Box::new(BlobDetector {
            class_label: class.to_string(),
            ..BlobDetector::default()
        })),
        _ => Err(BackendError::Unknown(name.to_string())),
    }
}

pub fn segmenter_by_name(name: &str) -> Result<Box<dyn Segmenter>, BackendError> {
    match name.strip_prefix("mock:").unwrap_or(name) {
        "rect-segmenter" => Ok(Box::new(RectSegmenter)),
        "blob-segmenter" => Ok(Box::new(BlobSegmenter)),
        other => Err(BackendError::Unknown(other.to_string())),
    }
}

pub fn inpainter_by_name(name: &str) -> Result<Box<dyn Inpainter>, BackendError> {
    let name = name.strip_prefix("mock:").unwrap_or(name);
    match name {
        "fill-inpainter" => Ok(Box::new(FillInpainter)),
        "identity-inpainter" => Ok(Box::new(IdentityInpainter)),
        "texture-inpainter" => Ok(Box::new(TextureInpainter)),
        "stamp-inpainter" => Ok(Box::new(StampInpainter::new("boat"))),
        _ => match name.split_once(':') {
            Some(("stamp-inpainter", target)) if !target.is_empty() => {
                Ok(Box::new(StampInpainter::new(target)))
            }
            _ => Err(BackendError::Unknown(name.to_string())),
        },
    }
}

impl<T: Detector + ?Sized> Detector for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
        (**self).detect_raw(image)
    }
    fn health(&self) -> super::HealthStatus {
        (**self).health()
    }
}

impl<T: Segmenter + ?Sized> Segmenter for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        (**self).segment_raw(image, boxes)
    }
    fn health(&self) -> super::HealthStatus {
        (**self).health()
    }
}

impl<T: Inpainter + ?Sized> Inpainter for Box<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn inpaint_raw(&self, request: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        (**self).inpaint_raw(request)
    }
    fn health(&self) -> super::HealthStatus {
        (**self).health()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{detect, inpaint, segment, InpaintParams};
    use crate::prompts::ModelFamily;

    const RED: [u8; 3] = [220, 30, 30];
    const GRAY: [u8; 3] = [110, 110, 110];

    fn ellipse_in(img: &mut RasterImage, cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryMask {
        let m = BinaryMask::from_fn(img.width(), img.height(), |x, y| {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        });
        for y in 0..img.height() {
            for x in 0..img.width() {
                if m.get(x, y) {
                    img.set_pixel(x, y, RED);
                }
            }
        }
        m
    }

    #[test]
    fn blob_detector_single_ellipse() {
        let mut img = RasterImage::filled(64, 64, GRAY).unwrap();
        let e = ellipse_in(&mut img, 30.0, 30.0, 12.0, 8.0);
        let dets = detect(&BlobDetector::default(), &img).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].confidence, (e.count() as f64 / 1000.0).min(1.0));
        assert_eq!(Some(dets[0].bbox), e.bounding_box());
    }

    #[test]
    fn blob_detector_blank_and_two_blobs() {
        let blank = RasterImage::filled(16, 16, GRAY).unwrap();
        assert!(detect(&BlobDetector::default(), &blank).unwrap().is_empty());

        let mut img = RasterImage::filled(80, 40, GRAY).unwrap();
        let small = ellipse_in(&mut img, 10.0, 20.0, 5.0, 5.0);
        let big = ellipse_in(&mut img, 50.0, 20.0, 15.0, 10.0);
        let dets = detect(&BlobDetector::default(), &img).unwrap();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].confidence, big.count() as f64 / 1000.0);
        assert_eq!(dets[1].confidence, small.count() as f64 / 1000.0);
    }

    #[test]
    fn segmenters() {
        let mut img = RasterImage::filled(40, 40, GRAY).unwrap();
        let e = ellipse_in(&mut img, 20.0, 20.0, 9.0, 6.0);
        let b = e.bounding_box().unwrap();
        let rect = segment(&RectSegmenter, &img, &[b]).unwrap();
        assert_eq!(rect[0], maskops::bbox_to_mask(&b, 40, 40));
        let blob = segment(&BlobSegmenter, &img, &[b]).unwrap();
        assert_eq!(blob[0], e);
        assert!(segment(&BlobSegmenter, &img, &[]).unwrap().is_empty());
    }

    #[test]
    fn fill_inpainter_uses_ring_mean() {
        let mut img = RasterImage::filled(40, 40, GRAY).unwrap();
        let e = ellipse_in(&mut img, 20.0, 20.0, 8.0, 8.0);
        let p = InpaintParams::defaults_for(ModelFamily::StableDiffusion).native();
        let out = inpaint(&FillInpainter, &img, &e, "", "", &p).unwrap();
        for y in 0..40 {
            for x in 0..40 {
                if e.get(x, y) {
                    assert_eq!(out.pixel(x, y), GRAY);
                } else {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
        assert!(detect(&BlobDetector::default(), &out).unwrap().is_empty());
    }

    #[test]
    fn fill_inpainter_on_blank_canvas_is_mid_gray() {
        let canvas = RasterImage::filled(8, 8, [128, 128, 128]).unwrap();
        assert_eq!(FillInpainter::fill_color(&canvas, &BinaryMask::full(8, 8)), [128, 128, 128]);
    }

    #[test]
    fn stamp_glyph_matches_oracle() {
        let img = RasterImage::filled(30, 30, GRAY).unwrap();
        let mask = BinaryMask::from_fn(30, 30, |x, y| (5..15).contains(&x) && (10..20).contains(&y));
        let p = InpaintParams::defaults_for(ModelFamily::StableDiffusion).native();
        let stamp = StampInpainter::new("boat");
        let out = inpaint(&stamp, &img, &mask, "", "", &p).unwrap();
        let hull = StampInpainter::hull_color("boat");
        assert!(!is_blob_pixel(hull));
        for y in 0..30u32 {
            for x in 0..30u32 {
                let expected = if !mask.get(x, y) {
                    GRAY
                } else if (y - 10) as f64 / 10.0 < 0.45 {
                    StampInpainter::UPPER
                } else {
                    hull
                };
                assert_eq!(out.pixel(x, y), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn texture_is_seeded() {
        let img = RasterImage::filled(12, 12, GRAY).unwrap();
        let mask = BinaryMask::full(12, 12);
        let mut p = InpaintParams::defaults_for(ModelFamily::StableDiffusion).native();
        let a = inpaint(&TextureInpainter, &img, &mask, "forest", "", &p).unwrap();
        let b = inpaint(&TextureInpainter, &img, &mask, "forest", "", &p).unwrap();
        assert_eq!(a, b);
        p.seed = 123;
        let c = inpaint(&TextureInpainter, &img, &mask, "forest", "", &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn names_resolve() {
        assert!(detector_by_name("blob-detector").is_ok());
        assert_eq!(detector_by_name("blob-detector:walrus").unwrap().identity(), "mock:blob-detector:walrus:1000");
        assert!(segmenter_by_name("mock:rect-segmenter").is_ok());
        assert_eq!(inpainter_by_name("stamp-inpainter:kayak").unwrap().identity(), "mock:stamp-inpainter:kayak");
        assert!(inpainter_by_name("dall-e").is_err());
    }
}
