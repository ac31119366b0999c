use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use odexai::detectors::protocol::{self, encode_frame, Handshake, Request, Response};
use odexai::detectors::{
    detect, open_backend, synthetic_capture, synthetic_detect, BackendOptions, BackendSpec, Detector, DetectorError,
    HttpBackend, SubprocessBackend, SyntheticDetector,
};
use odexai::ImageBuffer;

const BIN: &str = env!("CARGO_BIN_EXE_odexai-synthetic-backend");

fn scene(seed: usize) -> ImageBuffer {
    let (x, y) = (4 + seed * 3, 6 + seed * 2);
    ImageBuffer::from_fn(64, 64, |r, c| {
        if (y..y + 20).contains(&r) && (x..x + 24).contains(&c) {
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]][seed % 3]
        } else if (50..58).contains(&r) && (50..60).contains(&c) {
            [0.0, 0.0, 1.0]
        } else {
            [0.5, 0.5, 0.5]
        }
    })
    .unwrap()
}

fn cmd(extra: &str) -> String {
    format!("'{BIN}' {extra}")
}

#[test]
fn subprocess_matches_in_process_detector() {
    let backend = SubprocessBackend::spawn(&cmd(""), Duration::from_secs(30)).unwrap();
    assert_eq!(backend.descriptor(), SyntheticDetector::new().descriptor());
    let images: Vec<_> = (0..5).map(scene).collect();
    let got = detect(&backend, &images).unwrap();
    let want: Vec<_> = images.iter().map(synthetic_detect).collect();
    assert_eq!(got, want);
    assert_eq!(got[0].len(), 2);
}

#[test]
fn subprocess_capture_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let backend = SubprocessBackend::spawn(
        &cmd(&format!("--capture-dir '{}'", dir.path().display())),
        Duration::from_secs(30),
    )
    .unwrap();
    let img = scene(1);
    let mut want = synthetic_capture(&img, "stride4", 0).unwrap();
    let got = backend.capture(&img, "stride4", 0).unwrap();
    want.set_layer_id("stride4");
    assert_eq!(got, want);
    assert!(matches!(backend.capture(&img, "stride4", 7), Err(DetectorError::Remote(_))));
    // The backend keeps working after a remote error.
    assert_eq!(backend.detect_batch(std::slice::from_ref(&img)).unwrap()[0], synthetic_detect(&img));
}

#[test]
fn bad_handshake_is_unavailable() {
    let err = SubprocessBackend::spawn(&cmd("--fault bad-handshake"), Duration::from_secs(10)).err().unwrap();
    assert!(matches!(err, DetectorError::BackendUnavailable(_)), "{err}");
}

#[test]
fn missing_program_is_unavailable() {
    let err = SubprocessBackend::spawn("/definitely/not/here --x", Duration::from_secs(10)).err().unwrap();
    assert!(matches!(err, DetectorError::BackendUnavailable(_)), "{err}");
}

#[test]
fn malformed_response_is_protocol_violation() {
    let backend = SubprocessBackend::spawn(&cmd("--fault malformed"), Duration::from_secs(10)).unwrap();
    let err = backend.detect_batch(&[scene(0)]).unwrap_err();
    assert!(matches!(err, DetectorError::ProtocolViolation(_)), "{err}");
}

#[test]
fn unknown_id_is_protocol_violation() {
    let backend = SubprocessBackend::spawn(&cmd("--fault wrong-id"), Duration::from_secs(10)).unwrap();
    let err = backend.detect_batch(&[scene(0)]).unwrap_err();
    assert!(matches!(err, DetectorError::ProtocolViolation(_)), "{err}");
}

#[test]
fn hung_backend_times_out() {
    let backend = SubprocessBackend::spawn(&cmd("--fault hang"), Duration::from_millis(400)).unwrap();
    let started = Instant::now();
    let err = backend.detect_batch(&[scene(0), scene(1)]).unwrap_err();
    assert!(matches!(err, DetectorError::Timeout(_)), "{err}");
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[test]
fn dead_backend_is_unavailable_then_restarted() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("started-once");
    // First run exits on the first request; later runs behave.
    let script = format!(
        "if [ -e '{m}' ]; then exec '{BIN}'; else touch '{m}'; exec '{BIN}' --fault exit; fi",
        m = marker.display()
    );
    let backend = SubprocessBackend::spawn(&script, Duration::from_secs(10)).unwrap();
    let err = backend.detect_batch(&[scene(0)]).unwrap_err();
    assert!(matches!(err, DetectorError::BackendUnavailable(_)), "{err}");
    assert_eq!(backend.detect_batch(&[scene(0)]).unwrap()[0], synthetic_detect(&scene(0)));
}

#[test]
fn pooled_subprocess_backends() {
    let spec: BackendSpec = format!("subprocess:{}", cmd("")).parse().unwrap();
    let opts = BackendOptions {
        pool_size: 3,
        ..Default::default()
    };
    let pool = open_backend(&spec, &opts).unwrap();
    let images: Vec<_> = (0..7).map(scene).collect();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let pool = Arc::clone(&pool);
            let images = images.clone();
            std::thread::spawn(move || detect(pool.as_ref(), &images).unwrap())
        })
        .collect();
    let want: Vec<_> = images.iter().map(synthetic_detect).collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), want);
    }
}

/// Minimal single-request-per-connection HTTP server answering protocol frames.
fn spawn_http_backend(inline_captures: bool) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let detector = SyntheticDetector::new();
        let dir = tempfile::tempdir().unwrap();
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0usize;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some((k, v)) = h.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let path = request_line.split_whitespace().nth(1).unwrap_or("");
            let (status, json) = match path {
                "/handshake" => ("200 OK", encode_frame(&Handshake::from_descriptor(detector.descriptor()))),
                "/detect" | "/capture" => {
                    let req: Request = protocol::decode_frame(std::str::from_utf8(&body).unwrap()).unwrap();
                    let mut resp = protocol::respond(&detector, req, dir.path());
                    if let (true, Response::Capture(c)) = (inline_captures, &resp) {
                        resp = Response::CaptureInline(protocol::CaptureInlineFrame {
                            id: c.id,
                            bundle_odt_b64: protocol::encode_base64(&std::fs::read(&c.bundle_path).unwrap()),
                        });
                    }
                    ("200 OK", encode_frame(&resp))
                }
                _ => ("404 Not Found", "{}".to_string()),
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{json}",
                json.len()
            );
        }
    });
    format!("http://{addr}")
}

#[test]
fn http_backend_round_trip() {
    for inline in [false, true] {
        let url = spawn_http_backend(inline);
        let spec: BackendSpec = url.parse().unwrap();
        let backend = open_backend(&spec, &BackendOptions::default()).unwrap();
        let images: Vec<_> = (0..3).map(scene).collect();
        let want: Vec<_> = images.iter().map(synthetic_detect).collect();
        assert_eq!(detect(backend.as_ref(), &images).unwrap(), want);
        let cap = backend.capture(&images[2], "stride8", 1).unwrap();
        assert_eq!(cap.layer_id(), "stride8");
        assert_eq!(cap.channels(), 3);
        assert!(matches!(backend.capture(&images[2], "stride8", 9), Err(DetectorError::Remote(_))));
    }
}

#[test]
fn http_backend_unreachable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = HttpBackend::connect(&format!("http://{addr}"), Duration::from_secs(5)).err().unwrap();
    assert!(matches!(err, DetectorError::BackendUnavailable(_)), "{err}");
}
