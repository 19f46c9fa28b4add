//! JSON bodies of the backend HTTP contract.
//!
//! ```text
//! POST {endpoint}/detect   {"image": b64png}                   -> {"detections": [...]}
//! POST {endpoint}/segment  {"image": b64png, "boxes": [...]}   -> {"masks": [b64png-gray, ...]}
//! POST {endpoint}/inpaint  {"image", "mask", "prompt", "negative_prompt", "params"} -> {"image": b64png}
//! GET  {endpoint}/health                                        -> {"status": "ok", "model": str}
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{BackendError, InpaintParams};
use crate::raster;
use crate::types::{BBox, BinaryMask, Detection, RasterImage};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub image: String,
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<String>,
}

/// Sampling parameters as sent over the wire (resolution is handled client-side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireParams {
    pub guidance_scale: f64,
    pub num_inference_steps: u32,
    pub strength: f64,
    pub scheduler: String,
    pub seed: u64,
}

impl From<&InpaintParams> for WireParams {
    fn from(p: &InpaintParams) -> Self {
        Self {
            guidance_scale: p.guidance_scale,
            num_inference_steps: p.num_inference_steps,
            strength: p.strength,
            scheduler: p.scheduler.clone(),
            seed: p.seed,
        }
    }
}

impl WireParams {
    pub fn to_params(&self) -> InpaintParams {
        InpaintParams {
            guidance_scale: self.guidance_scale,
            num_inference_steps: self.num_inference_steps,
            strength: self.strength,
            scheduler: self.scheduler.clone(),
            seed: self.seed,
            target_resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintWireRequest {
    pub image: String,
    pub mask: String,
    pub prompt: String,
    pub negative_prompt: String,
    pub params: WireParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResponse {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model: String,
}

pub fn image_to_b64(image: &RasterImage) -> Result<String, BackendError> {
    let png = raster::encode_png(image).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

pub fn mask_to_b64(mask: &BinaryMask) -> Result<String, BackendError> {
    let png = raster::encode_binary_mask(mask).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    Ok(STANDARD.encode(png))
}

fn b64_bytes(data: &str) -> Result<Vec<u8>, BackendError> {
    STANDARD
        .decode(data.trim())
        .map_err(|e| BackendError::malformed(format!("base64: {e}"), data))
}

pub fn image_from_b64(data: &str) -> Result<RasterImage, BackendError> {
    raster::decode_image(&b64_bytes(data)?)
        .map_err(|e| BackendError::malformed(format!("image decode: {e}"), data))
}

pub fn mask_from_b64(data: &str) -> Result<BinaryMask, BackendError> {
    raster::decode_binary_mask(&b64_bytes(data)?)
        .map_err(|e| BackendError::malformed(format!("mask decode: {e}"), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inpaint_body_field_names() {
        let body = InpaintWireRequest {
            image: "i".into(),
            mask: "m".into(),
            prompt: "p".into(),
            negative_prompt: "n".into(),
            params: WireParams {
                guidance_scale: 20.0,
                num_inference_steps: 100,
                strength: 1.0,
                scheduler: "DPMSolverMultistep".into(),
                seed: 42,
            },
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"image":"i","mask":"m","prompt":"p","negative_prompt":"n","params":{"guidance_scale":20.0,"num_inference_steps":100,"strength":1.0,"scheduler":"DPMSolverMultistep","seed":42}}"#
        );
    }

    #[test]
    fn detect_response_parses_schema() {
        let r: DetectResponse = serde_json::from_str(
            r#"{"detections":[{"class":"seal","bbox":[1,2,3,4],"confidence":0.5}]}"#,
        )
        .unwrap();
        assert_eq!(r.detections[0].bbox, BBox::new(1, 2, 3, 4));
    }

    #[test]
    fn bad_base64_is_malformed() {
        assert!(matches!(image_from_b64("@@@"), Err(BackendError::Malformed { .. })));
    }
}
