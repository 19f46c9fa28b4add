//! Mask geometry and compositing.
//!
//! Conventions:
//! - padding is dilation with a square (Chebyshev) structuring element, so
//!   `pad(pad(m, a), b) == pad(m, a + b)`;
//! - feathering is a separable Gaussian blur with `sigma = radius`, kernel
//!   half-width `ceil(3 * sigma)`, renormalized after truncation, and
//!   half-sample symmetric ("reflect") borders;
//! - thresholding is inclusive (`alpha >= t`);
//! - compositing rounds half away from zero, then clamps to `0..=255`.

use crate::error::{Error, Result};
use crate::types::{BBox, BinaryMask, RasterImage, SoftMask};

/// Square structuring element used by [`pad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructuringElement {
    pub radius_px: u32,
}

impl StructuringElement {
    pub fn square(radius_px: u32) -> Self {
        Self { radius_px }
    }

    pub fn dilate(&self, mask: &BinaryMask) -> BinaryMask {
        pad(mask, self.radius_px)
    }
}

/// Rasterizes the part of `bbox` that falls inside a `width`x`height` frame.
pub fn bbox_to_mask(bbox: &BBox, width: u32, height: u32) -> BinaryMask {
    let mut mask = BinaryMask::empty(width, height);
    match bbox.clamp_to(width, height) {
        Some(b) => {
            for y in b.y as u32..(b.y as u32 + b.h) {
                for x in b.x as u32..(b.x as u32 + b.w) {
                    mask.set(x, y, true);
                }
            }
        }
        None => log::warn!("bbox {bbox:?} lies outside the {width}x{height} frame; mask is empty"),
    }
    mask
}

pub fn union(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("union of an empty mask list".into()))?;
    let mut bits = first.bits().to_vec();
    for m in rest {
        if m.dims() != first.dims() {
            return Err(Error::DimensionMismatch(format!(
                "union: {:?} vs {:?}",
                first.dims(),
                m.dims()
            )));
        }
        for (out, &b) in bits.iter_mut().zip(m.bits()) {
            *out |= b;
        }
    }
    BinaryMask::new(first.width(), first.height(), bits)
}

/// 1-D running "any" over a window of `radius` on each side.
fn dilate_line(line: &[bool], radius: usize, out: &mut [bool]) {
    let n = line.len();
    let mut prefix = vec![0u32; n + 1];
    for (i, &b) in line.iter().enumerate() {
        prefix[i + 1] = prefix[i] + b as u32;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        *o = prefix[hi] > prefix[lo];
    }
}

/// Morphological dilation with a `(2r+1)`-square element.
pub fn pad(mask: &BinaryMask, radius_px: u32) -> BinaryMask {
    if radius_px == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius_px as usize;
    let mut horizontal = vec![false; w * h];
    for (src, dst) in mask.bits().chunks(w).zip(horizontal.chunks_mut(w)) {
        dilate_line(src, r, dst);
    }
    let mut out = vec![false; w * h];
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = horizontal[y * w + x];
        }
        dilate_line(&col, r, &mut col_out);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    BinaryMask::new(mask.width(), mask.height(), out).expect("same dims")
}

/// Normalized Gaussian taps for offsets `0..=ceil(3*sigma)`; index 0 is the center.
pub fn gaussian_half_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as usize;
    let raw: Vec<f64> = (0..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    raw.into_iter().map(|v| v / total).collect()
}

/// Half-sample symmetric index folding: `... b a | a b c ... | c b ...`.
pub(crate) fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_line(src: &[f64], kernel: &[f64], out: &mut [f64]) {
    let n = src.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = kernel[0] * src[i];
        for (k, &w) in kernel.iter().enumerate().skip(1) {
            let left = src[reflect_index(i as i64 - k as i64, n)];
            let right = src[reflect_index(i as i64 + k as i64, n)];
            // pairing the taps keeps the result exactly mirror-symmetric
            acc += w * (left + right);
        }
        *o = acc;
    }
}

/// Round-off from kernel renormalization can leave 1 - 1e-16 where the
/// exact answer is 1; snap those so fully-covered pixels read as opaque.
const SNAP_EPS: f64 = 1e-12;

fn snap_unit(v: f64) -> f64 {
    if v < SNAP_EPS {
        0.0
    } else if v > 1.0 - SNAP_EPS {
        1.0
    } else {
        v
    }
}

/// Gaussian-blurred `{0, 1}` field of `mask`. Radius 0 returns the mask values.
pub fn feather(mask: &BinaryMask, blur_radius_px: f64) -> SoftMask {
    assert!(
        blur_radius_px >= 0.0 && blur_radius_px.is_finite(),
        "feather radius must be finite and >= 0"
    );
    if blur_radius_px == 0.0 {
        return mask.to_soft();
    }
    let kernel = gaussian_half_kernel(blur_radius_px);
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let field: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let mut horizontal = vec![0.0; w * h];
    for (src, dst) in field.chunks(w).zip(horizontal.chunks_mut(w)) {
        convolve_line(src, &kernel, dst);
    }
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = horizontal[y * w + x];
        }
        convolve_line(&col, &kernel, &mut col_out);
        for y in 0..h {
            out[y * w + x] = snap_unit(col_out[y]);
        }
    }
    SoftMask::new(mask.width(), mask.height(), out).expect("alpha within [0,1]")
}

pub fn threshold(soft: &SoftMask, t: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1]")));
    }
    BinaryMask::new(
        soft.width(),
        soft.height(),
        soft.alpha().iter().map(|&a| a >= t).collect(),
    )
}

fn nearest_index(dst: u32, src_dim: u32, dst_dim: u32) -> u32 {
    ((dst as u64 * src_dim as u64) / dst_dim as u64) as u32
}

/// Nearest-neighbour resize: `src = floor(dst * src_dim / dst_dim)`.
pub fn resize_binary_mask(mask: &BinaryMask, new_width: u32, new_height: u32) -> BinaryMask {
    if mask.dims() == (new_width, new_height) {
        return mask.clone();
    }
    BinaryMask::from_fn(new_width, new_height, |x, y| {
        mask.get(
            nearest_index(x, mask.width(), new_width),
            nearest_index(y, mask.height(), new_height),
        )
    })
}

/// Source sample positions and weights for bilinear resampling with
/// pixel-center alignment.
fn bilinear_taps(dst_dim: u32, src_dim: u32) -> Vec<(usize, usize, f64)> {
    let scale = src_dim as f64 / dst_dim as f64;
    (0..dst_dim)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_dim - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_dim as usize - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

fn bilinear_planes(
    src: &[f64],
    channels: usize,
    (sw, sh): (u32, u32),
    (dw, dh): (u32, u32),
) -> Vec<f64> {
    let xs = bilinear_taps(dw, sw);
    let ys = bilinear_taps(dh, sh);
    let sw = sw as usize;
    let mut out = Vec::with_capacity(dw as usize * dh as usize * channels);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..channels {
                let at = |x: usize, y: usize| src[(y * sw + x) * channels + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

pub fn resize_soft_mask(mask: &SoftMask, new_width: u32, new_height: u32) -> SoftMask {
    if mask.dims() == (new_width, new_height) {
        return mask.clone();
    }
    let alpha = bilinear_planes(mask.alpha(), 1, mask.dims(), (new_width, new_height))
        .into_iter()
        .map(|a| a.clamp(0.0, 1.0))
        .collect();
    SoftMask::new(new_width, new_height, alpha).expect("clamped alpha")
}

pub fn resize_image(image: &RasterImage, new_width: u32, new_height: u32) -> RasterImage {
    if image.dims() == (new_width, new_height) {
        return image.clone();
    }
    let src: Vec<f64> = image.pixels().iter().map(|&v| v as f64).collect();
    let pixels = bilinear_planes(&src, 3, image.dims(), (new_width, new_height))
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    RasterImage::new(new_width, new_height, pixels).expect("resized buffer")
}

/// `round(alpha * fg + (1 - alpha) * bg)` per channel.
pub fn composite(foreground: &RasterImage, alpha: &SoftMask, background: &RasterImage) -> Result<RasterImage> {
    if foreground.dims() != background.dims() || foreground.dims() != alpha.dims() {
        return Err(Error::DimensionMismatch(format!(
            "composite: foreground {:?}, alpha {:?}, background {:?}",
            foreground.dims(),
            alpha.dims(),
            background.dims()
        )));
    }
    let pixels = foreground
        .pixels()
        .chunks(3)
        .zip(background.pixels().chunks(3))
        .zip(alpha.alpha())
        .flat_map(|((fg, bg), &a)| {
            (0..3).map(move |c| blend(fg[c], bg[c], a))
        })
        .collect();
    RasterImage::new(foreground.width(), foreground.height(), pixels)
}

#[inline]
fn blend(fg: u8, bg: u8, alpha: f64) -> u8 {
    (alpha * fg as f64 + (1.0 - alpha) * bg as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_mask_examples() {
        let m = bbox_to_mask(&BBox::new(0, 0, 2, 2), 4, 4);
        assert_eq!(m.count(), 4);
        assert!(m.get(0, 0) && m.get(1, 1) && !m.get(2, 0));
        assert_eq!(bbox_to_mask(&BBox::new(0, 0, 4, 4), 4, 4), BinaryMask::full(4, 4));
        assert!(bbox_to_mask(&BBox::new(9, 9, 2, 2), 4, 4).is_empty());
    }

    #[test]
    fn clamped_bbox_matches_point_in_rect() {
        let b = BBox::new(3, 3, 4, 4);
        let m = bbox_to_mask(&b, 5, 5);
        let expected = (0..5).flat_map(|y| (0..5).map(move |x| (x, y))).filter(|&(x, y)| b.contains(x, y)).count();
        assert_eq!(expected, 4);
        assert_eq!(m.count(), expected);
    }

    #[test]
    fn union_examples() {
        let a = bbox_to_mask(&BBox::new(0, 0, 2, 2), 6, 6);
        let b = bbox_to_mask(&BBox::new(3, 3, 2, 2), 6, 6);
        assert_eq!(union(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(union(&[a.clone(), b]).unwrap().count(), 8);
        assert!(union(&[]).is_err());
        assert!(union(&[a, BinaryMask::empty(5, 6)]).is_err());
    }

    #[test]
    fn pad_single_pixel() {
        let mut m = BinaryMask::empty(11, 11);
        m.set(5, 5, true);
        let p = pad(&m, 3);
        assert_eq!(p.count(), 49);
        assert_eq!(p, BinaryMask::from_fn(11, 11, |x, y| (x as i32 - 5).abs().max((y as i32 - 5).abs()) <= 3));
        assert_eq!(pad(&m, 0), m);
        assert_eq!(pad(&BinaryMask::full(7, 3), 4), BinaryMask::full(7, 3));
    }

    #[test]
    fn kernel_is_normalized_and_truncated() {
        let k = gaussian_half_kernel(1.0);
        assert_eq!(k.len(), 4);
        let total = k[0] + 2.0 * k[1..].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-15);
        // exp(0) / (1 + 2(e^-0.5 + e^-2 + e^-4.5))
        let expected = 1.0 / (1.0 + 2.0 * ((-0.5f64).exp() + (-2.0f64).exp() + (-4.5f64).exp()));
        assert!((k[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn feather_examples() {
        assert!(feather(&BinaryMask::full(9, 4), 1.0).alpha().iter().all(|&a| a == 1.0));
        let m = BinaryMask::from_fn(4, 4, |x, _| x > 1);
        assert_eq!(feather(&m, 0.0), m.to_soft());
        assert!(feather(&BinaryMask::empty(5, 5), 2.0).is_empty());

        let mut single = BinaryMask::empty(15, 15);
        single.set(7, 7, true);
        let f = feather(&single, 1.0);
        let k = gaussian_half_kernel(1.0);
        assert!((f.get(7, 7) - k[0] * k[0]).abs() < 1e-15);
    }

    #[test]
    fn reflect_folds() {
        let idx: Vec<usize> = (-4..8).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(idx, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0, 1]);
    }

    #[test]
    fn threshold_boundary() {
        let s = SoftMask::new(3, 1, vec![0.49, 0.5, 0.0]).unwrap();
        let b = threshold(&s, 0.5).unwrap();
        assert_eq!(b.bits(), &[false, true, false]);
        assert_eq!(threshold(&s, 0.0).unwrap().count(), 3);
        assert!(threshold(&s, 1.5).is_err());
    }

    #[test]
    fn feathered_single_pixel_threshold_within_pad() {
        let mut m = BinaryMask::empty(9, 9);
        m.set(4, 4, true);
        let t = threshold(&feather(&m, 1.0), 0.5).unwrap();
        assert!(t.is_subset_of(&pad(&m, 1)));
    }

    #[test]
    fn resize_checkerboard_nearest() {
        let m = BinaryMask::from_fn(2, 2, |x, y| (x + y) % 2 == 0);
        let r = resize_binary_mask(&m, 4, 4);
        assert_eq!(r, BinaryMask::from_fn(4, 4, |x, y| m.get(x * 2 / 4, y * 2 / 4)));
        assert_eq!(resize_binary_mask(&m, 2, 2), m);
        assert_eq!(resize_binary_mask(&BinaryMask::full(3, 5), 7, 2), BinaryMask::full(7, 2));
        let s = SoftMask::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(resize_soft_mask(&s, 2, 1), s);
    }

    #[test]
    fn bilinear_image_identity_and_constant() {
        let img = RasterImage::new(2, 1, vec![0, 10, 20, 200, 100, 50]).unwrap();
        assert_eq!(resize_image(&img, 2, 1), img);
        let flat = RasterImage::filled(5, 3, [7, 8, 9]).unwrap();
        assert_eq!(resize_image(&flat, 11, 13), RasterImage::filled(11, 13, [7, 8, 9]).unwrap());
    }

    #[test]
    fn composite_examples() {
        let fg = RasterImage::filled(2, 2, [200, 200, 200]).unwrap();
        let bg = RasterImage::filled(2, 2, [100, 100, 100]).unwrap();
        let ones = SoftMask::new(2, 2, vec![1.0; 4]).unwrap();
        let zeros = SoftMask::new(2, 2, vec![0.0; 4]).unwrap();
        let half = SoftMask::new(2, 2, vec![0.5; 4]).unwrap();
        assert_eq!(composite(&fg, &ones, &bg).unwrap(), fg);
        assert_eq!(composite(&fg, &zeros, &bg).unwrap(), bg);
        assert_eq!(composite(&fg, &half, &bg).unwrap().pixel(0, 0), [150, 150, 150]);
        assert!(composite(&fg, &SoftMask::new(1, 1, vec![0.0]).unwrap(), &bg).is_err());
        // 0.5 * 1 + 0.5 * 0 = 0.5 rounds away from zero
        let a = RasterImage::filled(1, 1, [1, 1, 1]).unwrap();
        let b = RasterImage::filled(1, 1, [0, 0, 0]).unwrap();
        let h = SoftMask::new(1, 1, vec![0.5]).unwrap();
        assert_eq!(composite(&a, &h, &b).unwrap().pixel(0, 0), [1, 1, 1]);
    }
}
