//! Wire protocol v1: newline-delimited JSON frames.
//!
//! The backend writes one [`Handshake`] line on startup, then answers each
//! [`Request`] line with exactly one [`Response`] line carrying the same `id`.
//! Responses may arrive out of order; clients match them by `id`.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::bundle::{load_whitebox_capture, save_whitebox_capture, WhiteBoxCapture};
use super::{Detector, DetectorBackendDescriptor, DetectorError};
use crate::imageproc::{decode_png, encode_png};
use crate::types::{BBox, Detection, ImageBuffer};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Handshake {
    pub odexai_proto: u32,
    pub name: String,
    pub classes: Vec<String>,
    pub max_batch: usize,
    pub supports_whitebox: bool,
}

impl Handshake {
    pub fn from_descriptor(d: &DetectorBackendDescriptor) -> Self {
        Self {
            odexai_proto: PROTOCOL_VERSION,
            name: d.name.clone(),
            classes: d.class_names.clone(),
            max_batch: d.max_batch,
            supports_whitebox: d.supports_whitebox,
        }
    }

    pub fn into_descriptor(self) -> Result<DetectorBackendDescriptor, DetectorError> {
        if self.odexai_proto != PROTOCOL_VERSION {
            return Err(DetectorError::BackendUnavailable(format!(
                "backend speaks protocol {}, expected {PROTOCOL_VERSION}",
                self.odexai_proto
            )));
        }
        let d = DetectorBackendDescriptor {
            name: self.name,
            class_names: self.classes,
            max_batch: self.max_batch,
            supports_whitebox: self.supports_whitebox,
        };
        d.validate().map_err(|e| DetectorError::BackendUnavailable(e.to_string()))?;
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Detect {
        id: u64,
        image_png_b64: String,
    },
    Capture {
        id: u64,
        image_png_b64: String,
        layer: String,
        target_index: u32,
    },
}

impl Request {
    pub fn id(&self) -> u64 {
        match self {
            Self::Detect { id, .. } | Self::Capture { id, .. } => *id,
        }
    }

    pub fn detect(id: u64, image: &ImageBuffer) -> Self {
        Self::Detect {
            id,
            image_png_b64: encode_image(image),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireDetection {
    pub bbox: [f64; 4],
    pub objectness: f64,
    pub class_probs: Vec<f64>,
}

impl From<&Detection> for WireDetection {
    fn from(d: &Detection) -> Self {
        Self {
            bbox: d.bbox().to_array(),
            objectness: d.objectness(),
            class_probs: d.class_probs().to_vec(),
        }
    }
}

impl WireDetection {
    pub fn into_detection(self, n_classes: usize) -> Result<Detection, DetectorError> {
        if self.class_probs.len() != n_classes {
            return Err(DetectorError::ProtocolViolation(format!(
                "detection has {} class probabilities, backend declared {n_classes} classes",
                self.class_probs.len()
            )));
        }
        let [x1, y1, x2, y2] = self.bbox;
        let bbox = BBox::new(x1, y1, x2, y2).map_err(|e| DetectorError::ProtocolViolation(e.to_string()))?;
        Detection::new(bbox, self.objectness, self.class_probs).map_err(|e| DetectorError::ProtocolViolation(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error(ErrorFrame),
    Detect(DetectFrame),
    Capture(CaptureFrame),
    CaptureInline(CaptureInlineFrame),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorFrame {
    pub id: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectFrame {
    pub id: u64,
    pub detections: Vec<WireDetection>,
    pub timing_ms: f64,
}

/// The bundle lives on a filesystem shared with the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureFrame {
    pub id: u64,
    pub bundle_path: String,
}

/// The bundle bytes travel inline, for backends without a shared filesystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureInlineFrame {
    pub id: u64,
    pub bundle_odt_b64: String,
}

impl Response {
    pub fn id(&self) -> u64 {
        match self {
            Self::Error(f) => f.id,
            Self::Detect(f) => f.id,
            Self::Capture(f) => f.id,
            Self::CaptureInline(f) => f.id,
        }
    }
}

/// Interprets the answer to a detect request.
pub(crate) fn expect_detections(response: Response, n_classes: usize) -> Result<Vec<Detection>, DetectorError> {
    match response {
        Response::Detect(f) => f.detections.into_iter().map(|d| d.into_detection(n_classes)).collect(),
        Response::Error(e) => Err(DetectorError::Remote(e.error)),
        other => Err(DetectorError::ProtocolViolation(format!(
            "expected a detect response for id {}, got {other:?}",
            other.id()
        ))),
    }
}

/// Interprets the answer to a capture request. The layer id is the one requested.
pub(crate) fn expect_capture(response: Response, layer: &str) -> Result<WhiteBoxCapture, DetectorError> {
    let mut capture = match response {
        Response::Capture(f) => load_whitebox_capture(&f.bundle_path)?,
        Response::CaptureInline(f) => WhiteBoxCapture::from_odt_bytes(&decode_base64(&f.bundle_odt_b64)?, layer)?,
        Response::Error(e) => return Err(DetectorError::Remote(e.error)),
        Response::Detect(f) => {
            return Err(DetectorError::ProtocolViolation(format!(
                "expected a capture response for id {}, got detections",
                f.id
            )))
        }
    };
    capture.set_layer_id(layer);
    Ok(capture)
}

pub fn encode_image(image: &ImageBuffer) -> String {
    B64.encode(encode_png(image))
}

pub fn decode_image(b64: &str) -> Result<ImageBuffer, DetectorError> {
    let bytes = B64
        .decode(b64)
        .map_err(|e| DetectorError::ProtocolViolation(format!("image is not valid base64: {e}")))?;
    decode_png(&bytes).map_err(|e| DetectorError::ProtocolViolation(format!("image is not a valid PNG: {e}")))
}

pub fn decode_base64(b64: &str) -> Result<Vec<u8>, DetectorError> {
    B64.decode(b64)
        .map_err(|e| DetectorError::ProtocolViolation(format!("invalid base64: {e}")))
}

pub fn encode_base64(bytes: &[u8]) -> String {
    B64.encode(bytes)
}

/// One JSON document followed by `\n`.
pub fn encode_frame<T: Serialize>(frame: &T) -> String {
    let mut s = serde_json::to_string(frame).expect("frames always serialize");
    s.push('\n');
    s
}

pub fn decode_frame<T: for<'de> Deserialize<'de>>(line: &str) -> Result<T, DetectorError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| DetectorError::ProtocolViolation(format!("malformed frame: {e}")))
}

/// Answers one request. Capture bundles are written into `capture_dir`.
pub fn respond(detector: &dyn Detector, request: Request, capture_dir: &Path) -> Response {
    let id = request.id();
    let result = match request {
        Request::Detect { image_png_b64, .. } => (|| {
            let image = decode_image(&image_png_b64)?;
            let started = Instant::now();
            let mut lists = detector.detect_batch(std::slice::from_ref(&image))?;
            let timing_ms = started.elapsed().as_secs_f64() * 1000.0;
            let dets = lists.pop().unwrap_or_default();
            Ok(Response::Detect(DetectFrame {
                id,
                detections: dets.iter().map(WireDetection::from).collect(),
                timing_ms,
            }))
        })(),
        Request::Capture {
            image_png_b64,
            layer,
            target_index,
            ..
        } => (|| {
            let image = decode_image(&image_png_b64)?;
            let capture = detector.capture(&image, &layer, target_index as usize)?;
            let path = capture_dir.join(format!("capture-{id}.odt"));
            save_whitebox_capture(&capture, &path)?;
            Ok(Response::Capture(CaptureFrame {
                id,
                bundle_path: path.to_string_lossy().into_owned(),
            }))
        })(),
    };
    result.unwrap_or_else(|e: DetectorError| Response::Error(ErrorFrame { id, error: e.to_string() }))
}

/// Serves `detector` over protocol v1 until `reader` reaches EOF.
///
/// Undecodable request lines are answered with an error frame carrying id 0.
pub fn serve(
    detector: &dyn Detector,
    reader: impl BufRead,
    mut writer: impl Write,
    capture_dir: &Path,
) -> std::io::Result<()> {
    writer.write_all(encode_frame(&Handshake::from_descriptor(detector.descriptor())).as_bytes())?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match decode_frame::<Request>(&line) {
            Ok(req) => respond(detector, req, capture_dir),
            Err(e) => Response::Error(ErrorFrame { id: 0, error: e.to_string() }),
        };
        writer.write_all(encode_frame(&response).as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}
