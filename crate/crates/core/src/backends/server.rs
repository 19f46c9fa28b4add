//! HTTP server exposing in-process backends over the wire schema
//! (the `mock-serve` subcommand).

use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use super::wire::{self, DetectRequest, DetectResponse, HealthResponse, ImageResponse, InpaintWireRequest, SegmentRequest, SegmentResponse};
use super::{Backends, BackendError, InpaintRequest};
use crate::error::{Error, Result};

pub struct MockServer {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    port: u16,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts serving.
    pub fn start(addr: &str, backends: Backends, threads: usize) -> Result<Self> {
        let server = Server::http(addr).map_err(|e| Error::Config(format!("bind {addr}: {e}")))?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| Error::Config(format!("{addr} is not an IP address")))?;
        let server = Arc::new(server);
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = server.clone();
                let backends = backends.clone();
                std::thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle(request, &backends);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            workers,
            port,
        })
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Blocks until the server is shut down from another thread (never, for the CLI).
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

enum Reply {
    Json(Vec<u8>),
    Error(u16, String),
}

fn json<T: Serialize>(value: &T) -> Reply {
    match serde_json::to_vec(value) {
        Ok(bytes) => Reply::Json(bytes),
        Err(e) => Reply::Error(500, e.to_string()),
    }
}

fn parse<T: DeserializeOwned>(body: &str) -> std::result::Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| Reply::Error(400, format!("bad request body: {e}")))
}

fn backend_reply(e: BackendError) -> Reply {
    match e {
        BackendError::InvalidRequest(_) | BackendError::Malformed { .. } => Reply::Error(400, e.to_string()),
        other => Reply::Error(500, other.to_string()),
    }
}

fn route(method: &Method, path: &str, body: &str, backends: &Backends) -> Reply {
    match (method, path) {
        (Method::Get, "/health") => json(&HealthResponse {
            status: "ok".into(),
            model: format!(
                "{} | {} | {}",
                backends.detector.identity(),
                backends.segmenter.identity(),
                backends.inpainter.identity()
            ),
        }),
        (Method::Post, "/detect") => {
            let run = || -> std::result::Result<Reply, Reply> {
                let req: DetectRequest = parse(body)?;
                let image = wire::image_from_b64(&req.image).map_err(backend_reply)?;
                let detections = backends.detector.detect_raw(&image).map_err(backend_reply)?;
                Ok(json(&DetectResponse { detections }))
            };
            run().unwrap_or_else(|e| e)
        }
        (Method::Post, "/segment") => {
            let run = || -> std::result::Result<Reply, Reply> {
                let req: SegmentRequest = parse(body)?;
                let image = wire::image_from_b64(&req.image).map_err(backend_reply)?;
                let masks = backends.segmenter.segment_raw(&image, &req.boxes).map_err(backend_reply)?;
                let masks = masks
                    .iter()
                    .map(wire::mask_to_b64)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(backend_reply)?;
                Ok(json(&SegmentResponse { masks }))
            };
            run().unwrap_or_else(|e| e)
        }
        (Method::Post, "/inpaint") => {
            let run = || -> std::result::Result<Reply, Reply> {
                let req: InpaintWireRequest = parse(body)?;
                let image = wire::image_from_b64(&req.image).map_err(backend_reply)?;
                let mask = wire::mask_from_b64(&req.mask).map_err(backend_reply)?;
                if mask.dims() != image.dims() {
                    return Err(Reply::Error(400, "mask and image sizes differ".into()));
                }
                let params = req.params.to_params();
                let out = backends
                    .inpainter
                    .inpaint_raw(&InpaintRequest {
                        image: &image,
                        mask: &mask,
                        prompt: &req.prompt,
                        negative_prompt: &req.negative_prompt,
                        params: &params,
                    })
                    .map_err(backend_reply)?;
                Ok(json(&ImageResponse {
                    image: wire::image_to_b64(&out).map_err(backend_reply)?,
                }))
            };
            run().unwrap_or_else(|e| e)
        }
        _ => Reply::Error(404, format!("no route for {method} {path}")),
    }
}

fn handle(mut request: Request, backends: &Backends) {
    let mut body = String::new();
    let reply = match request.as_reader().read_to_string(&mut body) {
        Ok(_) => route(request.method(), request.url(), &body, backends),
        Err(e) => Reply::Error(400, format!("unreadable body: {e}")),
    };
    let content_type = Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    let response = match reply {
        Reply::Json(bytes) => Response::from_data(bytes).with_header(content_type),
        Reply::Error(code, message) => {
            let body = serde_json::json!({ "error": message }).to_string();
            Response::from_string(body).with_status_code(code).with_header(content_type)
        }
    };
    if let Err(e) = request.respond(response) {
        log::warn!("mock-serve: failed to send response: {e}");
    }
}
