//! The three interventions: object removal, object replacement, and
//! background replacement by compositing the detected objects onto a
//! generated scene.
//!
//! Mask construction is split from the edit itself so callers can cache
//! and time the two separately:
//!
//! ```text
//! raw    = union(segment(boxes) | bbox_to_mask(boxes))
//! soft   = feather(pad(raw, pad_px), feather_radius)
//! binary = threshold(soft, 0.5)
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{self, InpaintParams, Inpainter, Segmenter};
use crate::error::{Error, Result};
use crate::maskops;
use crate::prompts::{self, ModelFamily, PromptBook, PromptPair};
use crate::types::{BinaryMask, Detection, RasterImage, SoftMask};

/// Gray level of the canvas handed to the background generator.
pub const CANVAS_GRAY: u8 = 128;
pub const BACKGROUND_PAD_PX: u32 = 3;
pub const BACKGROUND_FEATHER_RADIUS: f64 = 1.0;
const HASH_HEX_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PerturbationKind {
    Removal,
    Replacement { target_class: String },
    Background { environment: String },
}

impl PerturbationKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbationKind::Removal => "removal",
            PerturbationKind::Replacement { .. } => "replacement",
            PerturbationKind::Background { .. } => "background",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    #[default]
    Segmentation,
    Bbox,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Segmentation => "segmentation",
            MaskMode::Bbox => "bbox",
        }
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segmentation" => Ok(MaskMode::Segmentation),
            "bbox" => Ok(MaskMode::Bbox),
            other => Err(Error::Config(format!("unknown mask mode {other:?} (segmentation|bbox)"))),
        }
    }
}

/// Which above-threshold detections the edit mask covers. Indices refer to
/// the above-threshold detections in descending-confidence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScope {
    #[default]
    Union,
    PerDetection(usize),
}

/// One fully resolved perturbation condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub mask_mode: MaskMode,
    pub mask_scope: MaskScope,
    pub pad_px: u32,
    pub feather_radius: f64,
    pub inpaint_params: InpaintParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PerturbationSpec {
    /// Kind-dependent defaults: background edits pad 3 px and feather with
    /// radius 1; removal and replacement use the raw mask.
    pub fn new(kind: PerturbationKind, family: ModelFamily) -> Self {
        let (pad_px, feather_radius) = match kind {
            PerturbationKind::Background { .. } => (BACKGROUND_PAD_PX, BACKGROUND_FEATHER_RADIUS),
            _ => (0, 0.0),
        };
        Self {
            kind,
            mask_mode: MaskMode::default(),
            mask_scope: MaskScope::default(),
            pad_px,
            feather_radius,
            inpaint_params: InpaintParams::defaults_for(family),
            label: None,
        }
    }

    pub fn removal(family: ModelFamily) -> Self {
        Self::new(PerturbationKind::Removal, family)
    }

    pub fn replacement(target_class: impl Into<String>, family: ModelFamily) -> Self {
        Self::new(
            PerturbationKind::Replacement {
                target_class: target_class.into(),
            },
            family,
        )
    }

    pub fn background(environment: impl Into<String>, family: ModelFamily) -> Self {
        Self::new(
            PerturbationKind::Background {
                environment: environment.into(),
            },
            family,
        )
    }

    pub fn with_mask_mode(mut self, mode: MaskMode) -> Self {
        self.mask_mode = mode;
        self
    }

    pub fn with_scope(mut self, scope: MaskScope) -> Self {
        self.mask_scope = scope;
        self
    }

    pub fn with_params(mut self, params: InpaintParams) -> Self {
        self.inpaint_params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.feather_radius.is_finite() && self.feather_radius >= 0.0) {
            return Err(Error::Config(format!(
                "feather_radius must be finite and >= 0, got {}",
                self.feather_radius
            )));
        }
        match &self.kind {
            PerturbationKind::Replacement { target_class } if target_class.trim().is_empty() => {
                return Err(Error::Config("replacement target_class is empty".into()));
            }
            PerturbationKind::Background { environment } => {
                prompts::environment(environment).map_err(|e| Error::Config(e.to_string()))?;
            }
            _ => {}
        }
        self.inpaint_params.validate()
    }

    /// Content address of the resolved spec.
    pub fn spec_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("spec serializes");
        let digest = hex::encode(Sha256::digest(&canonical));
        digest[..HASH_HEX_LEN].to_string()
    }

    /// Grouping key for summaries. Background specs that differ only in
    /// environment share a condition.
    pub fn condition(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        let mut name = format!("{}-{}", self.kind.name(), self.mask_mode.as_str());
        if let MaskScope::PerDetection(i) = self.mask_scope {
            name.push_str(&format!("-det{i}"));
        }
        name
    }

    pub fn environment(&self) -> Option<&str> {
        match &self.kind {
            PerturbationKind::Background { environment } => Some(environment),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        let what = match &self.kind {
            PerturbationKind::Removal => "removal".to_string(),
            PerturbationKind::Replacement { target_class } => format!("replacement -> {target_class}"),
            PerturbationKind::Background { environment } => format!("background: {environment}"),
        };
        let scope = match self.mask_scope {
            MaskScope::Union => "union".to_string(),
            MaskScope::PerDetection(i) => format!("detection {i}"),
        };
        format!(
            "{what} ({} mask, {scope}, pad {} px, feather {})",
            self.mask_mode.as_str(),
            self.pad_px,
            self.feather_radius
        )
    }
}

/// The edit region at each refinement stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EditMask {
    pub raw: BinaryMask,
    /// Feathered alpha, used for compositing.
    pub soft: SoftMask,
    /// `soft >= 0.5`, used for inpainting.
    pub binary: BinaryMask,
}

impl EditMask {
    pub fn refine(raw: BinaryMask, pad_px: u32, feather_radius: f64) -> Self {
        let padded = maskops::pad(&raw, pad_px);
        let soft = maskops::feather(&padded, feather_radius);
        let binary = maskops::threshold(&soft, 0.5).expect("0.5 is a valid threshold");
        Self { raw, soft, binary }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedImage {
    pub image: RasterImage,
    pub prompts: PromptPair,
    /// Generated scene, for background replacement only.
    pub background: Option<RasterImage>,
}

/// Above-threshold detections covered by `scope`, in descending confidence.
pub fn select_detections<'a>(detections: &'a [Detection], scope: MaskScope, tau: f64) -> Result<Vec<&'a Detection>> {
    let mut above: Vec<&Detection> = detections.iter().filter(|d| d.confidence >= tau).collect();
    above.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    if above.is_empty() {
        return Err(Error::NotApplicable(format!("no detections with confidence >= {tau}")));
    }
    match scope {
        MaskScope::Union => Ok(above),
        MaskScope::PerDetection(i) => above.get(i).map(|d| vec![*d]).ok_or_else(|| {
            Error::NotApplicable(format!(
                "detection index {i} out of range ({} above threshold)",
                above.len()
            ))
        }),
    }
}

/// Unrefined edit region: union of the selected detections' masks.
pub fn raw_edit_mask(
    image: &RasterImage,
    detections: &[Detection],
    mode: MaskMode,
    scope: MaskScope,
    tau: f64,
    segmenter: &dyn Segmenter,
) -> Result<BinaryMask> {
    let selected = select_detections(detections, scope, tau)?;
    let (w, h) = image.dims();
    let masks = match mode {
        MaskMode::Bbox => selected.iter().map(|d| maskops::bbox_to_mask(&d.bbox, w, h)).collect(),
        MaskMode::Segmentation => {
            let boxes: Vec<_> = selected.iter().map(|d| d.bbox).collect();
            backends::segment(segmenter, image, &boxes).map_err(|e| Error::backend("segment", e))?
        }
    };
    let raw = maskops::union(&masks)?;
    if raw.is_empty() {
        return Err(Error::NotApplicable("edit mask is empty".into()));
    }
    Ok(raw)
}

pub fn build_edit_mask(
    image: &RasterImage,
    detections: &[Detection],
    spec: &PerturbationSpec,
    tau: f64,
    segmenter: &dyn Segmenter,
) -> Result<EditMask> {
    let raw = raw_edit_mask(image, detections, spec.mask_mode, spec.mask_scope, tau, segmenter)?;
    Ok(EditMask::refine(raw, spec.pad_px, spec.feather_radius))
}

fn inpaint_with(
    inpainter: &dyn Inpainter,
    image: &RasterImage,
    mask: &BinaryMask,
    pair: &PromptPair,
    params: &InpaintParams,
    context: &str,
) -> Result<RasterImage> {
    if mask.is_empty() {
        return Err(Error::NotApplicable("edit mask is empty".into()));
    }
    backends::inpaint(inpainter, image, mask, &pair.positive, &pair.negative, params)
        .map_err(|e| Error::backend(context, e))
}

pub fn remove(
    image: &RasterImage,
    mask: &EditMask,
    spec: &PerturbationSpec,
    inpainter: &dyn Inpainter,
    book: &PromptBook,
) -> Result<PerturbedImage> {
    let pair = book.removal()?;
    let out = inpaint_with(inpainter, image, &mask.binary, &pair, &spec.inpaint_params, "inpaint (removal)")?;
    Ok(PerturbedImage {
        image: out,
        prompts: pair,
        background: None,
    })
}

/// `original_class` selects the per-class negative prompt.
pub fn replace(
    image: &RasterImage,
    mask: &EditMask,
    spec: &PerturbationSpec,
    original_class: &str,
    inpainter: &dyn Inpainter,
    book: &PromptBook,
) -> Result<PerturbedImage> {
    let PerturbationKind::Replacement { target_class } = &spec.kind else {
        return Err(Error::InvalidArgument(format!("replace called with a {} spec", spec.kind.name())));
    };
    let pair = book.replacement(target_class, original_class)?;
    let out = inpaint_with(
        inpainter,
        image,
        &mask.binary,
        &pair,
        &spec.inpaint_params,
        "inpaint (replacement)",
    )?;
    Ok(PerturbedImage {
        image: out,
        prompts: pair,
        background: None,
    })
}

pub fn blank_canvas(width: u32, height: u32) -> Result<RasterImage> {
    RasterImage::filled(width, height, [CANVAS_GRAY; 3])
}

/// Scene generated on a blank canvas of the given size.
pub fn generate_background(
    width: u32,
    height: u32,
    spec: &PerturbationSpec,
    inpainter: &dyn Inpainter,
    book: &PromptBook,
) -> Result<(RasterImage, PromptPair)> {
    let PerturbationKind::Background { environment } = &spec.kind else {
        return Err(Error::InvalidArgument(format!(
            "background generation called with a {} spec",
            spec.kind.name()
        )));
    };
    let pair = book.background(environment)?;
    let canvas = blank_canvas(width, height)?;
    let full = BinaryMask::full(width, height);
    let scene = inpaint_with(inpainter, &canvas, &full, &pair, &spec.inpaint_params, "inpaint (background)")?;
    Ok((scene, pair))
}

pub fn replace_background(
    image: &RasterImage,
    mask: &EditMask,
    spec: &PerturbationSpec,
    inpainter: &dyn Inpainter,
    book: &PromptBook,
) -> Result<PerturbedImage> {
    if mask.soft.is_empty() {
        return Err(Error::NotApplicable("foreground alpha is empty".into()));
    }
    let (scene, pair) = generate_background(image.width(), image.height(), spec, inpainter, book)?;
    let out = maskops::composite(image, &mask.soft, &scene)?;
    Ok(PerturbedImage {
        image: out,
        prompts: pair,
        background: Some(scene),
    })
}

/// Dispatches on the spec kind. The original class for replacement is the
/// class of the highest-confidence selected detection.
pub fn apply(
    image: &RasterImage,
    detections: &[Detection],
    mask: &EditMask,
    spec: &PerturbationSpec,
    tau: f64,
    inpainter: &dyn Inpainter,
    book: &PromptBook,
) -> Result<PerturbedImage> {
    match &spec.kind {
        PerturbationKind::Removal => remove(image, mask, spec, inpainter, book),
        PerturbationKind::Replacement { .. } => {
            let selected = select_detections(detections, spec.mask_scope, tau)?;
            replace(image, mask, spec, &selected[0].class_label, inpainter, book)
        }
        PerturbationKind::Background { .. } => replace_background(image, mask, spec, inpainter, book),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{BlobDetector, BlobSegmenter, FillInpainter, IdentityInpainter, RectSegmenter};
    use crate::backends::Detector;
    use crate::types::BBox;

    const RED: [u8; 3] = [220, 30, 30];
    const GRAY: [u8; 3] = [90, 90, 90];

    fn two_blob_image() -> RasterImage {
        let mut img = RasterImage::filled(40, 30, GRAY).unwrap();
        for (cx, cy, r) in [(10i64, 10i64, 4i64), (28, 18, 5)] {
            for y in 0..30i64 {
                for x in 0..40i64 {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        img.set_pixel(x as u32, y as u32, RED);
                    }
                }
            }
        }
        img
    }

    fn detections(img: &RasterImage) -> Vec<Detection> {
        backends::detect(&BlobDetector::default(), img).unwrap()
    }

    fn spec(family: ModelFamily) -> PerturbationSpec {
        let mut s = PerturbationSpec::removal(family);
        s.inpaint_params = s.inpaint_params.native();
        s
    }

    #[test]
    fn bbox_union_is_or_of_rectangles() {
        let img = RasterImage::filled(20, 20, GRAY).unwrap();
        let dets = vec![
            Detection::new("seal", BBox::new(1, 1, 4, 3), 0.9),
            Detection::new("seal", BBox::new(10, 12, 5, 5), 0.8),
            Detection::new("seal", BBox::new(15, 0, 2, 2), 0.1),
        ];
        let raw = raw_edit_mask(&img, &dets, MaskMode::Bbox, MaskScope::Union, 0.4, &RectSegmenter).unwrap();
        let expected = maskops::union(&[
            maskops::bbox_to_mask(&dets[0].bbox, 20, 20),
            maskops::bbox_to_mask(&dets[1].bbox, 20, 20),
        ])
        .unwrap();
        assert_eq!(raw, expected);
        let first = raw_edit_mask(&img, &dets, MaskMode::Bbox, MaskScope::PerDetection(0), 0.4, &RectSegmenter).unwrap();
        assert_eq!(first, maskops::bbox_to_mask(&dets[0].bbox, 20, 20));
        assert!(matches!(
            raw_edit_mask(&img, &dets, MaskMode::Bbox, MaskScope::PerDetection(2), 0.4, &RectSegmenter),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn segmentation_union_equals_blob_pixels() {
        let img = two_blob_image();
        let dets = detections(&img);
        assert_eq!(dets.len(), 2);
        let raw = raw_edit_mask(&img, &dets, MaskMode::Segmentation, MaskScope::Union, 0.0, &BlobSegmenter).unwrap();
        let oracle = BinaryMask::from_fn(40, 30, |x, y| {
            let [r, g, b] = img.pixel(x, y);
            r >= 150 && g <= 100 && b <= 100
        });
        assert_eq!(raw, oracle);
    }

    #[test]
    fn removal_with_fill_erases_blobs_and_keeps_outside() {
        let img = two_blob_image();
        let dets = detections(&img);
        let s = spec(ModelFamily::StableDiffusion);
        let mask = build_edit_mask(&img, &dets, &s, 0.0, &BlobSegmenter).unwrap();
        let out = remove(&img, &mask, &s, &FillInpainter, &PromptBook::new(ModelFamily::StableDiffusion)).unwrap();
        assert!(BlobDetector::default().detect_raw(&out.image).unwrap().is_empty());
        for y in 0..30 {
            for x in 0..40 {
                if !mask.binary.get(x, y) {
                    assert_eq!(out.image.pixel(x, y), img.pixel(x, y));
                } else {
                    assert_eq!(out.image.pixel(x, y), GRAY);
                }
            }
        }
        assert!(out.prompts.is_registry());
        let same = remove(&img, &mask, &s, &IdentityInpainter, &PromptBook::new(ModelFamily::StableDiffusion)).unwrap();
        assert_eq!(same.image, img);
    }

    #[test]
    fn no_detections_is_not_applicable() {
        let img = RasterImage::filled(8, 8, GRAY).unwrap();
        let s = spec(ModelFamily::StableDiffusion);
        assert!(matches!(build_edit_mask(&img, &[], &s, 0.4, &BlobSegmenter), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn background_preserves_full_alpha_pixels() {
        let img = two_blob_image();
        let dets = detections(&img);
        let mut s = PerturbationSpec::background("beach", ModelFamily::StableDiffusion);
        s.inpaint_params = s.inpaint_params.native();
        let mask = build_edit_mask(&img, &dets, &s, 0.0, &BlobSegmenter).unwrap();
        let out = replace_background(&img, &mask, &s, &FillInpainter, &PromptBook::new(ModelFamily::StableDiffusion)).unwrap();
        assert_eq!(out.background.as_ref().unwrap(), &blank_canvas(40, 30).unwrap());
        for y in 0..30 {
            for x in 0..40 {
                let a = mask.soft.get(x, y);
                if a == 1.0 {
                    assert_eq!(out.image.pixel(x, y), img.pixel(x, y));
                }
                if a == 0.0 {
                    assert_eq!(out.image.pixel(x, y), [CANVAS_GRAY; 3]);
                }
            }
        }
        assert!(mask.raw.is_subset_of(&BinaryMask::from_fn(40, 30, |x, y| mask.soft.get(x, y) == 1.0)));
    }

    #[test]
    fn full_alpha_background_is_identity() {
        let img = two_blob_image();
        let s = PerturbationSpec::background("forest", ModelFamily::Lama);
        let mask = EditMask::refine(BinaryMask::full(40, 30), 0, 0.0);
        let out = replace_background(&img, &mask, &s, &FillInpainter, &PromptBook::new(ModelFamily::Lama)).unwrap();
        assert_eq!(out.image, img);
    }

    #[test]
    fn canvas_is_mid_gray() {
        let c = blank_canvas(4, 4).unwrap();
        assert!(c.pixels().iter().all(|&v| v == 128));
        assert_eq!(c.pixels().len(), 48);
        assert_eq!(blank_canvas(1, 1).unwrap().pixel(0, 0), [128; 3]);
        assert!(blank_canvas(0, 3).is_err());
    }

    #[test]
    fn defaults_and_hashes() {
        let r = PerturbationSpec::removal(ModelFamily::StableDiffusion);
        assert_eq!((r.pad_px, r.feather_radius), (0, 0.0));
        let b = PerturbationSpec::background("beach", ModelFamily::StableDiffusion);
        assert_eq!((b.pad_px, b.feather_radius), (3, 1.0));
        assert_eq!(r.spec_hash(), r.clone().spec_hash());
        assert_ne!(r.spec_hash(), r.clone().with_mask_mode(MaskMode::Bbox).spec_hash());
        assert_eq!(r.condition(), "removal-segmentation");
        assert_eq!(
            r.with_scope(MaskScope::PerDetection(0)).condition(),
            "removal-segmentation-det0"
        );
        assert_eq!(b.condition(), PerturbationSpec::background("winter", ModelFamily::StableDiffusion).condition());
        assert!(PerturbationSpec::background("moon", ModelFamily::Flux).validate().is_err());
    }

    #[test]
    fn scope_json_shape() {
        assert_eq!(serde_json::to_string(&MaskScope::Union).unwrap(), r#""union""#);
        assert_eq!(serde_json::to_string(&MaskScope::PerDetection(1)).unwrap(), r#"{"per_detection":1}"#);
    }
}
