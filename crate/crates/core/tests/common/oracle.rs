//! Brute-force reference implementations. Written for obviousness, not speed.

use perturbex::metrics::OutcomeRecord;
use perturbex::types::{BinaryMask, RasterImage, SoftMask};

fn top_at(dets: &[perturbex::types::Detection], tau: f64) -> f64 {
    let mut best = 0.0;
    for d in dets {
        if d.confidence >= tau && d.confidence > best {
            best = d.confidence;
        }
    }
    best
}

pub fn flip_rate(records: &[OutcomeRecord], tau: f64) -> f64 {
    let mut flips = 0usize;
    for r in records {
        let mut survivors = 0;
        for d in &r.post_detections {
            if d.confidence >= tau {
                survivors += 1;
            }
        }
        if survivors == 0 {
            flips += 1;
        }
    }
    flips as f64 / records.len() as f64
}

/// Mean and population std of the per-record drop, over all records.
pub fn confidence_drop(records: &[OutcomeRecord], tau: f64) -> (f64, f64) {
    let drops: Vec<f64> = records
        .iter()
        .map(|r| top_at(&r.pre_detections, tau) - top_at(&r.post_detections, tau))
        .collect();
    let n = drops.len() as f64;
    let mean = drops.iter().sum::<f64>() / n;
    let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Each output pixel is set iff some input pixel within Chebyshev distance `r` is.
pub fn pad(m: &BinaryMask, r: u32) -> BinaryMask {
    let (w, h) = m.dims();
    let r = r as i64;
    BinaryMask::from_fn(w, h, |x, y| {
        for yy in 0..h as i64 {
            for xx in 0..w as i64 {
                if (xx - x as i64).abs() <= r && (yy - y as i64).abs() <= r && m.get(xx as u32, yy as u32) {
                    return true;
                }
            }
        }
        false
    })
}

pub fn union(masks: &[BinaryMask]) -> BinaryMask {
    let (w, h) = masks[0].dims();
    BinaryMask::from_fn(w, h, |x, y| masks.iter().any(|m| m.get(x, y)))
}

pub fn threshold(s: &SoftMask, t: f64) -> BinaryMask {
    BinaryMask::from_fn(s.width(), s.height(), |x, y| s.get(x, y) >= t)
}

/// Mirror `i` into `0..n` as `... b a | a b c | c b ...`, one step at a time.
fn reflect(mut i: i64, n: i64) -> i64 {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i;
        }
    }
}

/// Direct 2-D weighted sum of the reflected neighbourhood with weights
/// `exp(-(dx^2 + dy^2) / (2 sigma^2))` over the `ceil(3 sigma)` square,
/// normalized by the total weight.
pub fn feather(m: &BinaryMask, sigma: f64) -> Vec<f64> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    if sigma == 0.0 {
        return m.bits().iter().map(|&b| b as u8 as f64).collect();
    }
    let half = (3.0 * sigma).ceil() as i64;
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let wt = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
                    den += wt;
                    if m.get(reflect(x + dx, w) as u32, reflect(y + dy, h) as u32) {
                        num += wt;
                    }
                }
            }
            out.push(num / den);
        }
    }
    out
}

/// Whether every pixel of the reflected `ceil(3 sigma)` window around
/// (x, y) has value `v`; the exact feathered alpha is then `v` itself.
pub fn window_uniform(m: &BinaryMask, sigma: f64, x: u32, y: u32, v: bool) -> bool {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let half = (3.0 * sigma).ceil() as i64;
    for dy in -half..=half {
        for dx in -half..=half {
            if m.get(reflect(x as i64 + dx, w) as u32, reflect(y as i64 + dy, h) as u32) != v {
                return false;
            }
        }
    }
    true
}

pub fn composite(fg: &RasterImage, alpha: &SoftMask, bg: &RasterImage) -> RasterImage {
    let mut out = bg.clone();
    for y in 0..fg.height() {
        for x in 0..fg.width() {
            let a = alpha.get(x, y);
            let (f, b) = (fg.pixel(x, y), bg.pixel(x, y));
            let px = [0, 1, 2].map(|c| {
                let v = a * f[c] as f64 + (1.0 - a) * b[c] as f64;
                v.round().clamp(0.0, 255.0) as u8
            });
            out.set_pixel(x, y, px);
        }
    }
    out
}
