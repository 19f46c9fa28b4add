//! Blocking JSON-over-HTTP adapter for remote model services.

use std::io::Read;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::wire::{self, DetectRequest, DetectResponse, HealthResponse, ImageResponse, InpaintWireRequest, SegmentRequest, SegmentResponse};
use super::{
    excerpt, BackendDescriptor, BackendError, Detector, HealthStatus, InpaintRequest, Inpainter,
    RetryPolicy, Segmenter, Semaphore, API_TOKEN_ENV,
};
use crate::types::{BBox, BinaryMask, Detection, RasterImage};

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

/// One remote service. The same client serves whichever role its
/// descriptor names; requests beyond `max_concurrency` block until a slot
/// frees up.
pub struct HttpBackend {
    endpoint: String,
    agent: ureq::Agent,
    token: Option<String>,
    timeout: Duration,
    retry: RetryPolicy,
    limiter: Arc<Semaphore>,
}

impl HttpBackend {
    pub fn new(descriptor: &BackendDescriptor) -> Self {
        let timeout = descriptor.timeout();
        Self {
            endpoint: descriptor.endpoint.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            token: std::env::var(API_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            timeout,
            retry: descriptor.retry,
            limiter: Arc::new(Semaphore::new(descriptor.max_concurrency.max(1))),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Serialized body plus its content address, sent as `Idempotency-Key`
    /// so a retried request is recognizably the same request.
    pub fn encode_body<T: Serialize>(body: &T) -> Result<(Vec<u8>, String), BackendError> {
        let bytes = serde_json::to_vec(body).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let key = hex::encode(Sha256::digest(&bytes));
        Ok((bytes, key))
    }

    fn map_transport(&self, err: ureq::Error) -> BackendError {
        match err {
            ureq::Error::Status(status, resp) => {
                let body = resp.into_string().unwrap_or_default();
                BackendError::Service {
                    status,
                    excerpt: excerpt(&body),
                }
            }
            ureq::Error::Transport(t) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    BackendError::Timeout(self.timeout)
                } else {
                    BackendError::Transport(msg)
                }
            }
        }
    }

    fn read_body(resp: ureq::Response) -> Result<String, BackendError> {
        let mut body = String::new();
        resp.into_reader()
            .take(MAX_RESPONSE_BYTES)
            .read_to_string(&mut body)
            .map_err(|e| BackendError::Transport(format!("reading response: {e}")))?;
        Ok(body)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, route: &str, body: &Req) -> Result<Resp, BackendError> {
        let (bytes, key) = Self::encode_body(body)?;
        let url = format!("{}/{route}", self.endpoint);
        let _slot = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            let mut req = self
                .agent
                .post(&url)
                .set("Content-Type", "application/json")
                .set("Idempotency-Key", &key);
            if let Some(token) = &self.token {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            let result = req
                .send_bytes(&bytes)
                .map_err(|e| self.map_transport(e))
                .and_then(Self::read_body);
            match result {
                Ok(text) => {
                    return serde_json::from_str(&text)
                        .map_err(|e| BackendError::malformed(format!("{route}: {e}"), &text));
                }
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    log::warn!("{url}: {e}; retry {} of {}", attempt + 1, self.retry.max_retries);
                    std::thread::sleep(self.retry.delay_for(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// `GET {endpoint}/health`; unreachable on transport failure or on a
    /// body that does not match the schema.
    pub fn probe(&self) -> HealthStatus {
        let url = format!("{}/health", self.endpoint);
        let mut req = self.agent.get(&url);
        if let Some(token) = &self.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let body = match req.call().map_err(|e| self.map_transport(e)).and_then(Self::read_body) {
            Ok(body) => body,
            Err(e) => return HealthStatus::unreachable(e.to_string()),
        };
        match serde_json::from_str::<HealthResponse>(&body) {
            Ok(h) if h.status == "ok" => HealthStatus::reachable(h.model),
            _ => HealthStatus::unreachable("schema"),
        }
    }

    /// Request body for `/inpaint`; identical inputs give identical bytes.
    pub fn inpaint_body(request: &InpaintRequest<'_>) -> Result<InpaintWireRequest, BackendError> {
        Ok(InpaintWireRequest {
            image: wire::image_to_b64(request.image)?,
            mask: wire::mask_to_b64(request.mask)?,
            prompt: request.prompt.to_string(),
            negative_prompt: request.negative_prompt.to_string(),
            params: request.params.into(),
        })
    }
}

impl Detector for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn detect_raw(&self, image: &RasterImage) -> Result<Vec<Detection>, BackendError> {
        let resp: DetectResponse = self.post(
            "detect",
            &DetectRequest {
                image: wire::image_to_b64(image)?,
            },
        )?;
        Ok(resp.detections)
    }

    fn health(&self) -> HealthStatus {
        self.probe()
    }
}

impl Segmenter for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn segment_raw(&self, image: &RasterImage, boxes: &[BBox]) -> Result<Vec<BinaryMask>, BackendError> {
        let resp: SegmentResponse = self.post(
            "segment",
            &SegmentRequest {
                image: wire::image_to_b64(image)?,
                boxes: boxes.to_vec(),
            },
        )?;
        resp.masks.iter().map(|m| wire::mask_from_b64(m)).collect()
    }

    fn health(&self) -> HealthStatus {
        self.probe()
    }
}

impl Inpainter for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn inpaint_raw(&self, request: &InpaintRequest<'_>) -> Result<RasterImage, BackendError> {
        let resp: ImageResponse = self.post("inpaint", &Self::inpaint_body(request)?)?;
        wire::image_from_b64(&resp.image)
    }

    fn health(&self) -> HealthStatus {
        self.probe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendKind, InpaintParams};
    use crate::prompts::ModelFamily;

    #[test]
    fn identical_requests_serialize_identically() {
        let img = RasterImage::filled(8, 8, [1, 2, 3]).unwrap();
        let mask = BinaryMask::from_fn(8, 8, |x, _| x < 3);
        let params = InpaintParams::defaults_for(ModelFamily::StableDiffusion);
        let req = InpaintRequest {
            image: &img,
            mask: &mask,
            prompt: "a",
            negative_prompt: "b",
            params: &params,
        };
        let (a, ka) = HttpBackend::encode_body(&HttpBackend::inpaint_body(&req).unwrap()).unwrap();
        let (b, kb) = HttpBackend::encode_body(&HttpBackend::inpaint_body(&req).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ka, kb);
    }

    #[test]
    fn unroutable_endpoint_is_unreachable() {
        let mut d = BackendDescriptor::mock(BackendKind::Detector, "http://127.0.0.1:9");
        d.timeout_s = Some(2.0);
        let status = HttpBackend::new(&d).probe();
        assert!(!status.reachable);
        assert!(status.cause.is_some());
    }
}
