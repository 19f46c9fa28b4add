//! HTTP adapter behaviour against scripted servers.

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use perturbex::backends::server::MockServer;
use perturbex::backends::{self, BackendDescriptor, BackendError, BackendKind, Backends, RetryPolicy};
use perturbex::types::RasterImage;

/// One scripted reply: status, body, and a delay before answering.
type Reply = (u16, String, Duration);

struct Scripted {
    url: String,
    seen: Arc<Mutex<Vec<(String, Option<String>)>>>,
    handle: Option<JoinHandle<()>>,
    server: Arc<tiny_http::Server>,
}

impl Scripted {
    /// Answers requests with `replies` in order, repeating the last one.
    fn start(replies: Vec<Reply>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://127.0.0.1:{}", server.server_addr().to_ip().unwrap().port());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let (srv, log) = (server.clone(), seen.clone());
        let handle = std::thread::spawn(move || {
            let mut i = 0;
            while let Ok(req) = srv.recv() {
                let key = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Idempotency-Key"))
                    .map(|h| h.value.to_string());
                log.lock().unwrap().push((req.url().to_string(), key));
                let (status, body, delay) = replies[i.min(replies.len() - 1)].clone();
                i += 1;
                std::thread::sleep(delay);
                let _ = req.respond(tiny_http::Response::from_string(body).with_status_code(status));
            }
        });
        Self {
            url,
            seen,
            handle: Some(handle),
            server,
        }
    }

    fn requests(&self) -> Vec<(String, Option<String>)> {
        self.seen.lock().unwrap().clone()
    }
}

impl Drop for Scripted {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn descriptor(url: &str, retries: u32, timeout_s: f64) -> BackendDescriptor {
    BackendDescriptor {
        endpoint: url.to_string(),
        timeout_s: Some(timeout_s),
        retry: RetryPolicy {
            max_retries: retries,
            backoff_ms: 5,
        },
        ..BackendDescriptor::mock(BackendKind::Detector, "")
    }
}

fn image() -> RasterImage {
    RasterImage::filled(8, 8, [10, 20, 30]).unwrap()
}

const OK_BODY: &str = r#"{"detections": [{"class": "seal", "bbox": [1, 1, 4, 4], "confidence": 0.75}]}"#;

#[test]
fn transient_errors_are_retried_with_the_same_key() {
    let s = Scripted::start(vec![
        (503, "busy".into(), Duration::ZERO),
        (500, "oops".into(), Duration::ZERO),
        (200, OK_BODY.into(), Duration::ZERO),
    ]);
    let d = backends::build_detector(&descriptor(&s.url, 2, 5.0)).unwrap();
    let dets = backends::detect(d.as_ref(), &image()).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].confidence, 0.75);
    let reqs = s.requests();
    assert_eq!(reqs.len(), 3);
    assert!(reqs.iter().all(|(url, key)| url == "/detect" && key == &reqs[0].1 && key.is_some()));
}

#[test]
fn retries_are_bounded() {
    let s = Scripted::start(vec![(503, "busy".into(), Duration::ZERO)]);
    let d = backends::build_detector(&descriptor(&s.url, 2, 5.0)).unwrap();
    let err = backends::detect(d.as_ref(), &image()).unwrap_err();
    assert!(matches!(err, BackendError::Service { status: 503, .. }), "{err}");
    assert_eq!(s.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let s = Scripted::start(vec![(400, "bad image".into(), Duration::ZERO)]);
    let d = backends::build_detector(&descriptor(&s.url, 3, 5.0)).unwrap();
    let err = backends::detect(d.as_ref(), &image()).unwrap_err();
    assert!(matches!(&err, BackendError::Service { status: 400, excerpt } if excerpt == "bad image"), "{err}");
    assert_eq!(s.requests().len(), 1);
}

#[test]
fn malformed_bodies_are_reported() {
    let s = Scripted::start(vec![(200, "{\"detections\": 7}".into(), Duration::ZERO)]);
    let d = backends::build_detector(&descriptor(&s.url, 0, 5.0)).unwrap();
    let err = backends::detect(d.as_ref(), &image()).unwrap_err();
    assert!(matches!(err, BackendError::Malformed { .. }), "{err}");

    let s = Scripted::start(vec![(
        200,
        r#"{"detections": [{"class": "seal", "bbox": [0, 0, 2, 2], "confidence": 1.5}]}"#.into(),
        Duration::ZERO,
    )]);
    let d = backends::build_detector(&descriptor(&s.url, 0, 5.0)).unwrap();
    assert!(matches!(backends::detect(d.as_ref(), &image()), Err(BackendError::Malformed { .. })));
}

#[test]
fn slow_services_time_out() {
    let s = Scripted::start(vec![(200, OK_BODY.into(), Duration::from_millis(1500))]);
    let d = backends::build_detector(&descriptor(&s.url, 0, 0.2)).unwrap();
    let err = backends::detect(d.as_ref(), &image()).unwrap_err();
    assert!(err.is_transient(), "{err}");
    assert!(matches!(err, BackendError::Timeout(_) | BackendError::Transport(_)), "{err}");
}

#[test]
fn health_probe_reports_unreachable_services() {
    let status = backends::healthcheck(&descriptor("http://127.0.0.1:1", 0, 0.5));
    assert!(!status.reachable);
    let s = Scripted::start(vec![(200, r#"{"status": "ok", "model": "scripted"}"#.into(), Duration::ZERO)]);
    let status = backends::healthcheck(&descriptor(&s.url, 0, 5.0));
    assert!(status.reachable, "{status:?}");
}

#[test]
fn in_process_server_round_trips_every_route() {
    let server = MockServer::start("127.0.0.1:0", Backends::mock(), 2).unwrap();
    let url = server.url();
    let remote = Backends::from_descriptors(
        &BackendDescriptor { endpoint: url.clone(), ..BackendDescriptor::mock(BackendKind::Detector, "") },
        &BackendDescriptor { endpoint: url.clone(), ..BackendDescriptor::mock(BackendKind::Segmenter, "") },
        &BackendDescriptor { endpoint: url, ..BackendDescriptor::mock(BackendKind::Inpainter, "") },
    )
    .unwrap();
    let local = Backends::mock();
    let mut img = RasterImage::filled(40, 30, [70, 110, 140]).unwrap();
    for y in 5..20 {
        for x in 8..30 {
            img.set_pixel(x, y, [210, 30, 30]);
        }
    }
    let dr = backends::detect(remote.detector.as_ref(), &img).unwrap();
    let dl = backends::detect(local.detector.as_ref(), &img).unwrap();
    assert_eq!(dr, dl);
    let boxes: Vec<_> = dl.iter().map(|d| d.bbox).collect();
    let mr = backends::segment(remote.segmenter.as_ref(), &img, &boxes).unwrap();
    let ml = backends::segment(local.segmenter.as_ref(), &img, &boxes).unwrap();
    assert_eq!(mr, ml);
    assert!(remote.health().iter().all(|(_, h)| h.reachable));
    server.shutdown();
}
