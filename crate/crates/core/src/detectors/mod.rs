//! The detector boundary.
//!
//! Every explainer and metric talks to a detector through the [`Detector`]
//! trait. Three backends implement it:
//!
//! - [`SyntheticDetector`]: a deterministic pure-colour blob detector used for
//!   tests and desk-scale benchmarks.
//! - [`SubprocessBackend`]: a child process speaking wire protocol v1
//!   (newline-delimited JSON on stdin/stdout).
//! - [`HttpBackend`]: the same frames over HTTP.
//!
//! White-box captures for gradient-based explainers travel as ODT tensor
//! bundles, see [`bundle`].

pub mod bundle;
mod http;
pub mod protocol;
mod subprocess;
mod synthetic;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Detection, ImageBuffer};

pub use bundle::{load_whitebox_capture, save_whitebox_capture, OdtWriter, WhiteBoxCapture};
pub use http::HttpBackend;
pub use subprocess::SubprocessBackend;
pub use synthetic::{synthetic_capture, synthetic_detect, SyntheticDetector, SYNTHETIC_CLASSES};

/// Default per-batch timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("backend did not answer within {0:?}")]
    Timeout(Duration),
    #[error("backend reported an error: {0}")]
    Remote(String),
    #[error("malformed tensor bundle: {0}")]
    FormatError(String),
    #[error("tensor {0:?} contains NaN or infinite values")]
    NonFiniteTensor(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorBackendDescriptor {
    pub name: String,
    pub class_names: Vec<String>,
    pub max_batch: usize,
    pub supports_whitebox: bool,
}

impl DetectorBackendDescriptor {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.class_names.is_empty() {
            return Err(DetectorError::ProtocolViolation("backend declares no classes".into()));
        }
        if self.max_batch == 0 {
            return Err(DetectorError::ProtocolViolation("max_batch must be at least 1".into()));
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }
}

pub trait Detector: Send + Sync {
    fn descriptor(&self) -> &DetectorBackendDescriptor;

    /// Detects objects in at most `max_batch` images, one list per image.
    fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError>;

    /// Exports feature maps and gradients of `layer` for the detection at
    /// `target_index` in this backend's detection list for `image`.
    fn capture(
        &self,
        _image: &ImageBuffer,
        _layer: &str,
        _target_index: usize,
    ) -> Result<WhiteBoxCapture, DetectorError> {
        Err(DetectorError::Unsupported(format!(
            "backend {:?} does not export white-box captures",
            self.descriptor().name
        )))
    }
}

/// Runs detection over any number of images, chunked by the backend's
/// `max_batch`. The output has one entry per input image, in order.
pub fn detect(backend: &dyn Detector, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
    let batch = backend.descriptor().max_batch.max(1);
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch) {
        let got = backend.detect_batch(chunk)?;
        if got.len() != chunk.len() {
            return Err(DetectorError::ProtocolViolation(format!(
                "{} responses for {} images",
                got.len(),
                chunk.len()
            )));
        }
        out.extend(got);
    }
    Ok(out)
}

/// Round-robin pool of backend handles. Each handle serializes its own
/// requests, so the pool bounds concurrency at the number of handles.
pub struct BackendPool {
    handles: Vec<Arc<dyn Detector>>,
    next: AtomicUsize,
}

impl BackendPool {
    pub fn new(handles: Vec<Arc<dyn Detector>>) -> Result<Self, DetectorError> {
        if handles.is_empty() {
            return Err(DetectorError::InvalidSpec("backend pool needs at least one handle".into()));
        }
        Ok(Self {
            handles,
            next: AtomicUsize::new(0),
        })
    }

    pub fn size(&self) -> usize {
        self.handles.len()
    }

    fn pick(&self) -> &Arc<dyn Detector> {
        let i = self.next.fetch_add(1, Ordering::Relaxed) % self.handles.len();
        &self.handles[i]
    }
}

impl Detector for BackendPool {
    fn descriptor(&self) -> &DetectorBackendDescriptor {
        self.handles[0].descriptor()
    }

    fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        self.pick().detect_batch(images)
    }

    fn capture(&self, image: &ImageBuffer, layer: &str, target_index: usize) -> Result<WhiteBoxCapture, DetectorError> {
        self.pick().capture(image, layer, target_index)
    }
}

/// `synthetic`, `subprocess:<shell command>` or `http:<base url>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    Synthetic,
    Subprocess(String),
    Http(String),
}

impl FromStr for BackendSpec {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "synthetic" {
            return Ok(Self::Synthetic);
        }
        if let Some(cmd) = s.strip_prefix("subprocess:") {
            if !cmd.trim().is_empty() {
                return Ok(Self::Subprocess(cmd.trim().to_string()));
            }
        }
        if let Some(url) = s.strip_prefix("http:") {
            // Accept both `http:<url>` and a bare `http://host` URL.
            let url = if url.starts_with("//") { format!("http:{url}") } else { url.to_string() };
            if !url.is_empty() {
                return Ok(Self::Http(url));
            }
        }
        Err(DetectorError::InvalidSpec(format!(
            "{s:?} (expected synthetic, subprocess:<cmd> or http:<url>)"
        )))
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Synthetic => f.write_str("synthetic"),
            Self::Subprocess(cmd) => write!(f, "subprocess:{cmd}"),
            Self::Http(url) => write!(f, "http:{url}"),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = DetectorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(s: BackendSpec) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct BackendOptions {
    pub pool_size: usize,
    pub timeout: Duration,
}

impl Default for BackendOptions {
    fn default() -> Self {
        Self {
            pool_size: 1,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

/// Connects to a backend. Process and HTTP backends perform their handshake
/// here, so a returned handle has a validated descriptor.
pub fn open_backend(spec: &BackendSpec, options: &BackendOptions) -> Result<Arc<dyn Detector>, DetectorError> {
    let one = |spec: &BackendSpec| -> Result<Arc<dyn Detector>, DetectorError> {
        Ok(match spec {
            BackendSpec::Synthetic => Arc::new(SyntheticDetector::new()),
            BackendSpec::Subprocess(cmd) => Arc::new(SubprocessBackend::spawn(cmd, options.timeout)?),
            BackendSpec::Http(url) => Arc::new(HttpBackend::connect(url, options.timeout)?),
        })
    };
    if options.pool_size <= 1 || *spec == BackendSpec::Synthetic {
        return one(spec);
    }
    let handles = (0..options.pool_size).map(|_| one(spec)).collect::<Result<Vec<_>, _>>()?;
    Ok(Arc::new(BackendPool::new(handles)?))
}
