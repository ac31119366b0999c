//! Protocol v1 frames over HTTP.
//!
//! `GET {base}/handshake` returns the handshake; `POST {base}/detect` and
//! `POST {base}/capture` take one request frame and return one response frame.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::de::DeserializeOwned;

use super::protocol::{self, Handshake, Request, Response};
use super::{Detector, DetectorBackendDescriptor, DetectorError, WhiteBoxCapture};
use crate::types::{Detection, ImageBuffer};

const BODY_LIMIT: u64 = 512 * 1024 * 1024;

pub struct HttpBackend {
    base: String,
    timeout: Duration,
    agent: ureq::Agent,
    descriptor: DetectorBackendDescriptor,
    next_id: AtomicU64,
}

impl HttpBackend {
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, DetectorError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        let base = base_url.trim_end_matches('/').to_string();
        let handshake: Handshake = read_json(
            agent.get(format!("{base}/handshake")).call(),
            timeout,
        )
        .map_err(|e| match e {
            DetectorError::BackendUnavailable(_) => e,
            other => DetectorError::BackendUnavailable(format!("handshake with {base} failed: {other}")),
        })?;
        let descriptor = handshake.into_descriptor()?;
        Ok(Self {
            base,
            timeout,
            agent,
            descriptor,
            next_id: AtomicU64::new(1),
        })
    }

    fn post(&self, op: &str, request: &Request) -> Result<Response, DetectorError> {
        let response: Response = read_json(self.agent.post(format!("{}/{op}", self.base)).send_json(request), self.timeout)?;
        if response.id() != request.id() {
            return Err(DetectorError::ProtocolViolation(format!(
                "response id {} does not echo request id {}",
                response.id(),
                request.id()
            )));
        }
        Ok(response)
    }
}

fn read_json<T: DeserializeOwned>(
    result: Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    timeout: Duration,
) -> Result<T, DetectorError> {
    let mut response = result.map_err(|e| map_error(e, timeout))?;
    let text = response
        .body_mut()
        .with_config()
        .limit(BODY_LIMIT)
        .read_to_string()
        .map_err(|e| map_error(e, timeout))?;
    protocol::decode_frame(&text)
}

fn map_error(e: ureq::Error, timeout: Duration) -> DetectorError {
    match e {
        ureq::Error::Timeout(_) => DetectorError::Timeout(timeout),
        ureq::Error::StatusCode(code) => DetectorError::Remote(format!("HTTP status {code}")),
        other => DetectorError::BackendUnavailable(other.to_string()),
    }
}

impl Detector for HttpBackend {
    fn descriptor(&self) -> &DetectorBackendDescriptor {
        &self.descriptor
    }

    fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        let n = self.descriptor.class_names.len();
        images
            .iter()
            .map(|img| {
                let request = Request::detect(self.next_id.fetch_add(1, Ordering::Relaxed), img);
                protocol::expect_detections(self.post("detect", &request)?, n)
            })
            .collect()
    }

    fn capture(&self, image: &ImageBuffer, layer: &str, target_index: usize) -> Result<WhiteBoxCapture, DetectorError> {
        if !self.descriptor.supports_whitebox {
            return Err(DetectorError::Unsupported(format!(
                "backend {:?} does not export white-box captures",
                self.descriptor.name
            )));
        }
        let request = Request::Capture {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            image_png_b64: protocol::encode_image(image),
            layer: layer.to_string(),
            target_index: u32::try_from(target_index)
                .map_err(|_| DetectorError::Unsupported(format!("target_index {target_index} too large")))?,
        };
        protocol::expect_capture(self.post("capture", &request)?, layer)
    }
}
