//! PNG I/O for images and masks.
//!
//! Masks are 8-bit grayscale on disk: 0/255 for binary masks, 0..=255 for
//! soft masks (alpha quantized with round-half-away-from-zero).

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::types::{BinaryMask, RasterImage, SoftMask};

pub fn read_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image_at(&bytes, path)
}

pub fn write_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>> {
    let buf = RgbImage::from_raw(image.width(), image.height(), image.pixels().to_vec())
        .expect("RasterImage invariant guarantees buffer size");
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    decode_image_at(bytes, Path::new("<memory>"))
}

fn decode_dynamic(bytes: &[u8], path: &Path) -> Result<DynamicImage> {
    if bytes.is_empty() {
        return Err(Error::UnreadableImage {
            path: path.to_path_buf(),
            message: "file is empty".into(),
        });
    }
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
    })?;
    image::load_from_memory_with_format(bytes, format).map_err(|e| match e {
        image::ImageError::Unsupported(_) => Error::UnsupportedFormat {
            path: path.to_path_buf(),
        },
        other => Error::UnreadableImage {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

fn decode_image_at(bytes: &[u8], path: &Path) -> Result<RasterImage> {
    let rgb = decode_dynamic(bytes, path)?.into_rgb8();
    let (w, h) = rgb.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::UnreadableImage {
            path: path.to_path_buf(),
            message: "image has a zero dimension".into(),
        });
    }
    RasterImage::new(w, h, rgb.into_raw())
}

fn encode_gray(width: u32, height: u32, data: Vec<u8>) -> Result<Vec<u8>> {
    let buf = GrayImage::from_raw(width, height, data).expect("mask buffer size");
    let mut out = Vec::new();
    buf.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out)
}

pub fn encode_binary_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    let data = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_gray(mask.width(), mask.height(), data)
}

pub fn encode_soft_mask(mask: &SoftMask) -> Result<Vec<u8>> {
    let data = mask
        .alpha()
        .iter()
        .map(|&a| (a * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    encode_gray(mask.width(), mask.height(), data)
}

fn decode_gray(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let gray = decode_dynamic(bytes, path)?.into_luma8();
    if gray.width() == 0 || gray.height() == 0 {
        return Err(Error::UnreadableImage {
            path: path.to_path_buf(),
            message: "mask has a zero dimension".into(),
        });
    }
    Ok(gray)
}

/// Any nonzero gray value decodes as `true`.
pub fn decode_binary_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let gray = decode_gray(bytes, Path::new("<memory>"))?;
    let (w, h) = gray.dimensions();
    BinaryMask::new(w, h, gray.into_raw().into_iter().map(|v| v > 0).collect())
}

pub fn decode_soft_mask(bytes: &[u8]) -> Result<SoftMask> {
    let gray = decode_gray(bytes, Path::new("<memory>"))?;
    let (w, h) = gray.dimensions();
    SoftMask::new(
        w,
        h,
        gray.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
    )
}

pub fn write_binary_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_binary_mask(mask)?).map_err(|e| Error::io(path, e))
}

pub fn write_soft_mask(mask: &SoftMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_soft_mask(mask)?).map_err(|e| Error::io(path, e))
}

pub fn read_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let gray = decode_gray(&bytes, path)?;
    let (w, h) = gray.dimensions();
    BinaryMask::new(w, h, gray.into_raw().into_iter().map(|v| v > 0).collect())
}
