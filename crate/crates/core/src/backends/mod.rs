//! Detector, segmenter and inpainter backends.
//!
//! Each service is a trait with a "raw" call implemented by the mock suite
//! ([`mock`]) and the JSON-over-HTTP adapter ([`http`]). The free functions
//! [`detect`], [`segment`] and [`inpaint`] wrap the raw calls with the
//! contract every backend shares: sorted/validated detections, per-box
//! masks at image size, model-resolution resizing, and client-side
//! restoration of unmasked pixels.

pub mod http;
pub mod mock;
pub mod server;
pub mod wire;

use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::maskops;
use crate::prompts::ModelFamily;
use crate::types::{sort_detections, BBox, BinaryMask, Detection, RasterImage};

pub const API_TOKEN_ENV: &str = "PERTURBEX_API_TOKEN";
pub const TIMEOUT_ENV: &str = "PERTURBEX_TIMEOUT_S";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport: {0}")]
    Transport(String),
    #[error("service returned HTTP {status}: {excerpt}")]
    Service { status: u16, excerpt: String },
    #[error("malformed response ({message}): {excerpt}")]
    Malformed { message: String, excerpt: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown backend {0:?}")]
    Unknown(String),
}

impl BackendError {
    pub(crate) fn malformed(message: impl Into<String>, payload: &str) -> Self {
        BackendError::Malformed {
            message: message.into(),
            excerpt: excerpt(payload),
        }
    }

    /// Whether a retry may succeed.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Timeout(_) | BackendError::Transport(_) => true,
            BackendError::Service { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub(crate) fn excerpt(payload: &str) -> String {
    const LIMIT: usize = 200;
    match payload.char_indices().nth(LIMIT) {
        Some((i, _)) => format!("{}...", &payload[..i]),
        None => payload.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Detector,
    Segmenter,
    Inpainter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Base delay; attempt `n` waits `backoff_ms * 2^n`.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_ms: 250,
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

fn default_concurrency() -> usize {
    4
}

/// Where and how to reach one backend service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// `http(s)://...` for the HTTP adapter, otherwise a mock name such as
    /// `blob-detector` or `stamp-inpainter:boat`.
    pub endpoint: String,
    #[serde(default = "default_family")]
    pub model_family: ModelFamily,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Per-request timeout; falls back to `PERTURBEX_TIMEOUT_S`, then 120 s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Extra latency injected before every call (timing experiments).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay_ms: u64,
}

fn default_family() -> ModelFamily {
    ModelFamily::StableDiffusion
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

impl BackendDescriptor {
    pub fn mock(kind: BackendKind, name: &str) -> Self {
        Self {
            kind,
            endpoint: name.to_string(),
            model_family: ModelFamily::StableDiffusion,
            max_concurrency: default_concurrency(),
            timeout_s: None,
            retry: RetryPolicy::default(),
            delay_ms: 0,
        }
    }

    pub fn is_http(&self) -> bool {
        self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")
    }

    pub fn timeout(&self) -> Duration {
        let secs = self
            .timeout_s
            .or_else(|| std::env::var(TIMEOUT_ENV).ok().and_then(|v| v.parse().ok()))
            .unwrap_or(120.0);
        Duration::from_secs_f64(secs.max(0.001))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_concurrency == 0 {
            return Err(Error::Config(format!(
                "{:?} backend: max_concurrency must be >= 1",
                self.kind
            )));
        }
        if let Some(t) = self.timeout_s {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("{:?} backend: timeout must be > 0", self.kind)));
            }
        }
        if self.endpoint.is_empty() {
            return Err(Error::Config(format!("{:?} backend: empty endpoint", self.kind)));
        }
        Ok(())
    }
}

/// Diffusion sampling parameters, passed through to the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintParams {
    pub guidance_scale: f64,
    pub num_inference_steps: u32,
    /// `strength` / `prompt_strength`, depending on the family.
    pub strength: f64,
    pub scheduler: String,
    pub seed: u64,
    /// Resolution the request is sent at; `None` keeps the native size.
    #[serde(default)]
    pub target_resolution: Option<(u32, u32)>,
}

impl InpaintParams {
    pub fn defaults_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::StableDiffusion => Self {
                guidance_scale: 20.0,
                num_inference_steps: 100,
                strength: 1.0,
                scheduler: "DPMSolverMultistep".into(),
                seed: 42,
                target_resolution: Some((512, 512)),
            },
            ModelFamily::Sdxl => Self {
                guidance_scale: 25.0,
                num_inference_steps: 100,
                strength: 1.0,
                scheduler: "K_EULER".into(),
                seed: 42,
                target_resolution: Some((1024, 1024)),
            },
            ModelFamily::Flux => Self {
                guidance_scale: 10.0,
                num_inference_steps: 50,
                strength: 1.0,
                scheduler: "flow".into(),
                seed: 42,
                target_resolution: Some((1024, 1024)),
            },
            ModelFamily::Lama => Self {
                guidance_scale: 1.0,
                num_inference_steps: 1,
                strength: 1.0,
                scheduler: String::new(),
                seed: 42,
                target_resolution: None,
            },
        }
    }

    pub fn native(mut self) -> Self {
        self.target_resolution = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_inference_steps < 1 {
            return Err(Error::Config("num_inference_steps must be >= 1".into()));
        }
        if !(self.guidance_scale.is_finite() && self.guidance_scale > 0.0) {
            return Err(Error::Config("guidance_scale must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::Config("strength must lie in [0, 1]".into()));
        }
        if let Some((w, h)) = self.target_resolution {
            if w == 0 || h == 0 {
                return Err(Error::Config("target_resolution must be >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub reachable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

impl HealthStatus {
    pub fn reachable(model: impl Into<String>) -> Self {
        Self {
            reachable: true,
            model: Some(model.into()),
            cause: None,
        }
    }

    pub fn unreachable(cause: impl Into<String>) -> Self {
        Self {
            reachable: false,
            model: None,
            cause: Some(cause.into()),
        }
    }
}

/// Everything an inpainting service receives.
#[derive(Debug, Clone)]
pub struct InpaintRequest<'a> {
    pub image: &'a RasterImage,
    pub mask: &'a BinaryMask,
    pub prompt: &'a str,
    pub negative_prompt: &'a str,
    pub params: &'a InpaintParams,
}

pub trait Detector: Send + Sync {
    /// Stable identity, used in cache keys and health reports.
    fn identity(&self) -> String;
    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError>;
    fn health(&self) -> HealthStatus {
        HealthStatus::reachable(self.identity())
    }
}

pub trait Segmenter: Send + Sync {
    fn identity(&self) -> String;
    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError>;
    fn health(&self) -> HealthStatus {
        HealthStatus::reachable(self.identity())
    }
}

pub trait Inpainter: Send + Sync {
    fn identity(&self) -> String;
    fn inpaint_raw(&self, request: &InpaintRequest<'_>) -> Result<RasterImage, BackendError>;
    fn health(&self) -> HealthStatus {
        HealthStatus::reachable(self.identity())
    }
}

/// Runs the detector and normalizes its output: confidences checked,
/// boxes clamped to the frame, results sorted by descending confidence.
pub fn detect(detector: &dyn Detector, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
    let raw = detector.detect_raw(image)?;
    let mut out = Vec::with_capacity(raw.len());
    for d in raw {
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(BackendError::malformed(
                "confidence outside [0, 1]",
                &serde_json::to_string(&d).unwrap_or_default(),
            ));
        }
        match d.bbox.clamp_to(image.width(), image.height()) {
            Some(bbox) => {
                if bbox != d.bbox {
                    log::warn!("clamped detection box {:?} to {:?}", d.bbox, bbox);
                }
                out.push(Detection { bbox, ..d });
            }
            None => log::warn!("dropping detection outside the frame: {:?}", d.bbox),
        }
    }
    sort_detections(&mut out);
    Ok(out)
}

pub fn segment(
    segmenter: &dyn Segmenter,
    image: &RasterImage,
    boxes: &[BBox],
) -> Result<Vec<BinaryMask>, BackendError> {
    if boxes.is_empty() {
        return Ok(Vec::new());
    }
    let clamped: Vec<BBox> = boxes
        .iter()
        .map(|b| b.clamp_to(image.width(), image.height()).unwrap_or(*b))
        .collect();
    let masks = segmenter.segment_raw(image, &clamped)?;
    if masks.len() != boxes.len() {
        return Err(BackendError::Malformed {
            message: format!("expected {} masks, got {}", boxes.len(), masks.len()),
            excerpt: String::new(),
        });
    }
    masks
        .into_iter()
        .map(|m| {
            if m.dims() == image.dims() {
                Ok(m)
            } else {
                log::warn!("segmenter returned {:?} mask for {:?} image; resizing", m.dims(), image.dims());
                Ok(maskops::resize_binary_mask(&m, image.width(), image.height()))
            }
        })
        .collect()
}

/// Inpaints `mask` and returns an image of the input's size whose unmasked
/// pixels equal the original byte-for-byte.
///
/// The request is sent at `params.target_resolution` (image bilinear, mask
/// nearest-neighbour) and the response is mapped back to native size.
pub fn inpaint(
    inpainter: &dyn Inpainter,
    image: &RasterImage,
    mask: &BinaryMask,
    positive: &str,
    negative: &str,
    params: &InpaintParams,
) -> Result<RasterImage, BackendError> {
    if mask.dims() != image.dims() {
        return Err(BackendError::InvalidRequest(format!(
            "mask {:?} does not match image {:?}",
            mask.dims(),
            image.dims()
        )));
    }
    if mask.is_empty() {
        return Err(BackendError::InvalidRequest("inpaint mask is empty".into()));
    }
    let (w, h) = image.dims();
    let (tw, th) = params.target_resolution.unwrap_or((w, h));
    let req_image = maskops::resize_image(image, tw, th);
    let req_mask = maskops::resize_binary_mask(mask, tw, th);
    let request = InpaintRequest {
        image: &req_image,
        mask: &req_mask,
        prompt: positive,
        negative_prompt: negative,
        params,
    };
    let generated = inpainter.inpaint_raw(&request)?;
    let generated = maskops::resize_image(&generated, w, h);
    Ok(restore_unmasked(image, &generated, mask))
}

/// Copies `original` pixels back wherever `mask` is false.
pub fn restore_unmasked(original: &RasterImage, generated: &RasterImage, mask: &BinaryMask) -> RasterImage {
    let mut out = generated.clone();
    for y in 0..original.height() {
        for x in 0..original.width() {
            if !mask.get(x, y) {
                out.set_pixel(x, y, original.pixel(x, y));
            }
        }
    }
    out
}

/// Counting semaphore bounding in-flight requests per backend.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap_or_else(|e| e.into_inner());
        }
        *permits -= 1;
        SemaphoreGuard { sem: self }
    }
}

pub struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.sem.permits.lock().unwrap_or_else(|e| e.into_inner());
        *permits += 1;
        self.sem.available.notify_one();
    }
}

/// Adds a fixed latency before every call of the wrapped backend.
pub struct Delayed<T> {
    pub inner: T,
    pub delay: Duration,
}

impl<T> Delayed<T> {
    pub fn new(inner: T, delay: Duration) -> Self {
        Self { inner, delay }
    }

    fn wait(&self) {
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
    }
}

impl<T: Detector> Detector for Delayed<T> {
    fn identity(&self) -> String {
        self.inner.identity()
    }
    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
        self.wait();
        self.inner.detect_raw(image)
    }
    fn health(&self) -> HealthStatus {
        self.inner.health()
    }
}

impl<T: Segmenter> Segmenter for Delayed<T> {
    fn identity(&self) -> String {
        self.inner.identity()
    }
    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        self.wait();
        self.inner.segment_raw(image, boxes)
    }
    fn health(&self) -> HealthStatus {
        self.inner.health()
    }
}

impl<T: Inpainter> Inpainter for Delayed<T> {
    fn identity(&self) -> String {
        self.inner.identity()
    }
    fn inpaint_raw(&self, request: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        self.wait();
        self.inner.inpaint_raw(request)
    }
    fn health(&self) -> HealthStatus {
        self.inner.health()
    }
}

impl<T: Detector + ?Sized> Detector for Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
        (**self).detect_raw(image)
    }
    fn health(&self) -> HealthStatus {
        (**self).health()
    }
}

impl<T: Segmenter + ?Sized> Segmenter for Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        (**self).segment_raw(image, boxes)
    }
    fn health(&self) -> HealthStatus {
        (**self).health()
    }
}

impl<T: Inpainter + ?Sized> Inpainter for Arc<T> {
    fn identity(&self) -> String {
        (**self).identity()
    }
    fn inpaint_raw(&self, request: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        (**self).inpaint_raw(request)
    }
    fn health(&self) -> HealthStatus {
        (**self).health()
    }
}

/// The three services one run talks to.
#[derive(Clone)]
pub struct Backends {
    pub detector: Arc<dyn Detector>,
    pub segmenter: Arc<dyn Segmenter>,
    pub inpainter: Arc<dyn Inpainter>,
}

impl fmt::Debug for Backends {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Backends")
            .field("detector", &self.detector.identity())
            .field("segmenter", &self.segmenter.identity())
            .field("inpainter", &self.inpainter.identity())
            .finish()
    }
}

impl Backends {
    /// The default mock trio: blob detector, blob segmenter, fill inpainter.
    pub fn mock() -> Self {
        Self {
            detector: Arc::new(mock::BlobDetector::default()),
            segmenter: Arc::new(mock::BlobSegmenter),
            inpainter: Arc::new(mock::FillInpainter),
        }
    }

    pub fn from_descriptors(
        detector: &BackendDescriptor,
        segmenter: &BackendDescriptor,
        inpainter: &BackendDescriptor,
    ) -> Result<Self> {
        Ok(Self {
            detector: build_detector(detector)?,
            segmenter: build_segmenter(segmenter)?,
            inpainter: build_inpainter(inpainter)?,
        })
    }

    pub fn health(&self) -> [(BackendKind, HealthStatus); 3] {
        [
            (BackendKind::Detector, self.detector.health()),
            (BackendKind::Segmenter, self.segmenter.health()),
            (BackendKind::Inpainter, self.inpainter.health()),
        ]
    }
}

fn check_kind(descriptor: &BackendDescriptor, kind: BackendKind) -> Result<()> {
    descriptor.validate()?;
    if descriptor.kind != kind {
        return Err(Error::Config(format!(
            "descriptor for {:?} used as {:?}",
            descriptor.kind, kind
        )));
    }
    Ok(())
}

fn delay_of(descriptor: &BackendDescriptor) -> Duration {
    Duration::from_millis(descriptor.delay_ms)
}

pub fn build_detector(descriptor: &BackendDescriptor) -> Result<Arc<dyn Detector>> {
    check_kind(descriptor, BackendKind::Detector)?;
    let delay = delay_of(descriptor);
    if descriptor.is_http() {
        return Ok(Arc::new(Delayed::new(http::HttpBackend::new(descriptor), delay)));
    }
    let inner = mock::detector_by_name(&descriptor.endpoint).map_err(Error::from)?;
    Ok(Arc::new(Delayed::new(inner, delay)))
}

pub fn build_segmenter(descriptor: &BackendDescriptor) -> Result<Arc<dyn Segmenter>> {
    check_kind(descriptor, BackendKind::Segmenter)?;
    let delay = delay_of(descriptor);
    if descriptor.is_http() {
        return Ok(Arc::new(Delayed::new(http::HttpBackend::new(descriptor), delay)));
    }
    let inner = mock::segmenter_by_name(&descriptor.endpoint).map_err(Error::from)?;
    Ok(Arc::new(Delayed::new(inner, delay)))
}

pub fn build_inpainter(descriptor: &BackendDescriptor) -> Result<Arc<dyn Inpainter>> {
    check_kind(descriptor, BackendKind::Inpainter)?;
    let delay = delay_of(descriptor);
    if descriptor.is_http() {
        return Ok(Arc::new(Delayed::new(http::HttpBackend::new(descriptor), delay)));
    }
    let inner = mock::inpainter_by_name(&descriptor.endpoint).map_err(Error::from)?;
    Ok(Arc::new(Delayed::new(inner, delay)))
}

/// Probes the service a descriptor points at. Never fails; problems are
/// reported in the status.
pub fn healthcheck(descriptor: &BackendDescriptor) -> HealthStatus {
    if let Err(e) = descriptor.validate() {
        return HealthStatus::unreachable(e.to_string());
    }
    if descriptor.is_http() {
        return http::HttpBackend::new(descriptor).probe();
    }
    let status = match descriptor.kind {
        BackendKind::Detector => mock::detector_by_name(&descriptor.endpoint).map(|d| d.health()),
        BackendKind::Segmenter => mock::segmenter_by_name(&descriptor.endpoint).map(|d| d.health()),
        BackendKind::Inpainter => mock::inpainter_by_name(&descriptor.endpoint).map(|d| d.health()),
    };
    status.unwrap_or_else(|e| HealthStatus::unreachable(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::{FillInpainter, IdentityInpainter};

    #[test]
    fn excerpt_truncates() {
        let long = "x".repeat(500);
        assert_eq!(excerpt(&long).len(), 203);
        assert_eq!(excerpt("short"), "short");
    }

    #[test]
    fn retry_backoff_doubles() {
        let p = RetryPolicy { max_retries: 3, backoff_ms: 10 };
        assert_eq!(p.delay_for(0), Duration::from_millis(10));
        assert_eq!(p.delay_for(2), Duration::from_millis(40));
    }

    #[test]
    fn params_validate() {
        let mut p = InpaintParams::defaults_for(ModelFamily::StableDiffusion);
        assert!(p.validate().is_ok());
        p.num_inference_steps = 0;
        assert!(p.validate().is_err());
        let mut p = InpaintParams::defaults_for(ModelFamily::Sdxl);
        p.guidance_scale = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn inpaint_preserves_unmasked_pixels_through_resize() {
        let mut img = RasterImage::filled(20, 12, [90, 90, 90]).unwrap();
        for x in 0..20 {
            img.set_pixel(x, 0, [x as u8 * 10, 3, 200]);
        }
        let mask = BinaryMask::from_fn(20, 12, |x, y| (5..9).contains(&x) && (4..8).contains(&y));
        let params = InpaintParams::defaults_for(ModelFamily::StableDiffusion);
        let out = inpaint(&FillInpainter, &img, &mask, "p", "n", &params).unwrap();
        assert_eq!(out.dims(), img.dims());
        for y in 0..12 {
            for x in 0..20 {
                if !mask.get(x, y) {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
        let same = inpaint(&IdentityInpainter, &img, &mask, "", "", &params.clone().native()).unwrap();
        assert_eq!(same, img);
    }

    #[test]
    fn inpaint_rejects_bad_masks() {
        let img = RasterImage::filled(4, 4, [0, 0, 0]).unwrap();
        let p = InpaintParams::defaults_for(ModelFamily::Lama);
        assert!(inpaint(&IdentityInpainter, &img, &BinaryMask::empty(4, 4), "", "", &p).is_err());
        assert!(inpaint(&IdentityInpainter, &img, &BinaryMask::full(3, 4), "", "", &p).is_err());
        assert!(inpaint(&IdentityInpainter, &img, &BinaryMask::full(4, 4), "", "", &p).is_ok());
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let (sem, active, peak) = (sem.clone(), active.clone(), peak.clone());
                s.spawn(move || {
                    let _g = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn mock_health_and_unknown_names() {
        let d = BackendDescriptor::mock(BackendKind::Detector, "blob-detector");
        assert!(healthcheck(&d).reachable);
        let bad = BackendDescriptor::mock(BackendKind::Detector, "no-such-thing");
        let status = healthcheck(&bad);
        assert!(!status.reachable);
        assert!(build_detector(&bad).is_err());
        let wrong_kind = BackendDescriptor::mock(BackendKind::Segmenter, "rect-segmenter");
        assert!(build_detector(&wrong_kind).is_err());
    }
}
