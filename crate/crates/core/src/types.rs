//! Domain types shared by every stage of the pipeline.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row-major RGB8 pixel grid.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} RGB image needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform image filled with `rgb`.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn mirrored_horizontally(&self) -> Self {
        let w = self.width as usize;
        let mut out = self.clone();
        for y in 0..self.height as usize {
            for x in 0..w {
                let src = (y * w + x) * 3;
                let dst = (y * w + (w - 1 - x)) * 3;
                out.pixels[dst..dst + 3].copy_from_slice(&self.pixels[src..src + 3]);
            }
        }
        out
    }
}

/// Per-pixel edit region; `true` marks editable/foreground pixels.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if bits.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::constant(width, height, false)
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::constant(width, height, true)
    }

    fn constant(width: u32, height: u32, value: bool) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        Self {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tightest box around the set pixels, `None` when the mask is empty.
    pub fn bounding_box(&self) -> Option<BBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != u32::MAX).then(|| BBox::new(x0 as i64, y0 as i64, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn mirrored_horizontally(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
    }

    pub fn to_soft(&self) -> SoftMask {
        SoftMask {
            width: self.width,
            height: self.height,
            alpha: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Per-pixel alpha in [0, 1], used for compositing.
#[derive(Clone, PartialEq)]
pub struct SoftMask {
    width: u32,
    height: u32,
    alpha: Vec<f64>,
}

impl std::fmt::Debug for SoftMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SoftMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl SoftMask {
    pub fn new(width: u32, height: u32, alpha: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "mask dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if alpha.len() != width as usize * height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} soft mask needs {} values, got {}",
                width as usize * height as usize,
                alpha.len()
            )));
        }
        if let Some(bad) = alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::InvalidArgument(format!(
                "alpha {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            alpha,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.alpha[y as usize * self.width as usize + x as usize]
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }

    pub fn mirrored_horizontally(&self) -> Self {
        let w = self.width as usize;
        let mut alpha = self.alpha.clone();
        for row in alpha.chunks_mut(w) {
            row.reverse();
        }
        Self {
            width: self.width,
            height: self.height,
            alpha,
        }
    }
}

/// Axis-aligned pixel box, top-left origin.
///
/// Serialized as `[x, y, w, h]`. Fractional coordinates from detectors are
/// rounded to the nearest integer pixel on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    /// Intersects the box with a `width`x`height` frame. `None` if nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w as i64).min(width as i64);
        let y1 = (self.y + self.h as i64).min(height as i64);
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, (x1 - x0) as u32, (y1 - y0) as u32))
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w as i64 && y < self.y + self.h as i64
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.w as i64, self.h as i64].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(d)?;
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(D::Error::custom("bbox values must be finite"));
        }
        let (w, h) = (w.round(), h.round());
        if w < 1.0 || h < 1.0 {
            return Err(D::Error::custom(format!(
                "bbox width and height must be positive, got {w}x{h}"
            )));
        }
        Ok(BBox::new(x.round() as i64, y.round() as i64, w as u32, h as u32))
    }
}

/// One detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "class")]
    pub class_label: String,
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(class_label: impl Into<String>, bbox: BBox, confidence: f64) -> Self {
        Self {
            class_label: class_label.into(),
            bbox,
            confidence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// Sorts by descending confidence; ties fall back to box position so the
/// order is total and stable across backends.
pub fn sort_detections(detections: &mut [Detection]) {
    detections.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| (a.bbox.y, a.bbox.x, a.bbox.w, a.bbox.h).cmp(&(b.bbox.y, b.bbox.x, b.bbox.w, b.bbox.h)))
            .then_with(|| a.class_label.cmp(&b.class_label))
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_zero_dims_and_bad_len() {
        assert!(RasterImage::new(0, 4, vec![]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 11]).is_err());
        assert!(RasterImage::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn soft_mask_rejects_out_of_range_alpha() {
        assert!(SoftMask::new(1, 1, vec![1.5]).is_err());
        assert!(SoftMask::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn bbox_clamp() {
        let b = BBox::new(3, 3, 4, 4);
        assert_eq!(b.clamp_to(5, 5), Some(BBox::new(3, 3, 2, 2)));
        assert_eq!(BBox::new(-2, 0, 3, 1).clamp_to(5, 5), Some(BBox::new(0, 0, 1, 1)));
        assert_eq!(BBox::new(10, 10, 2, 2).clamp_to(5, 5), None);
    }

    #[test]
    fn bbox_json_rounds_fractional_input() {
        let b: BBox = serde_json::from_str("[1.4, 2.6, 3, 4]").unwrap();
        assert_eq!(b, BBox::new(1, 3, 3, 4));
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,3,3,4]");
        assert!(serde_json::from_str::<BBox>("[0,0,0,4]").is_err());
    }

    #[test]
    fn detections_sort_descending() {
        let mut d = vec![
            Detection::new("a", BBox::new(0, 0, 1, 1), 0.2),
            Detection::new("a", BBox::new(5, 0, 1, 1), 0.9),
            Detection::new("a", BBox::new(1, 0, 1, 1), 0.9),
        ];
        sort_detections(&mut d);
        assert_eq!(d[0].bbox.x, 1);
        assert_eq!(d[1].bbox.x, 5);
        assert_eq!(d[2].confidence, 0.2);
    }
}
