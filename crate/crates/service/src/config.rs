use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use odexai::detectors::BackendSpec;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Loaded from TOML:
///
/// ```toml
/// data_dir = "odexai-data"
/// bind = "127.0.0.1:8080"
/// ui_dir = "webui/dist"
///
/// [backends]
/// synthetic = "synthetic"
/// yolox = "subprocess:python -m odexai_adapter --model yolox"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub max_upload_bytes: usize,
    /// Jobs waiting for a worker; further submissions get 429.
    pub queue_capacity: usize,
    /// Jobs run at once. Each job already uses every core for masked
    /// inference, so more than one rarely helps.
    pub workers: usize,
    pub backend_timeout_s: u64,
    /// Static web UI served under `/ui`; nothing is served when unset.
    pub ui_dir: Option<PathBuf>,
    pub backends: BTreeMap<String, BackendSpec>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("odexai-data"),
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_upload_bytes: 16 * 1024 * 1024,
            queue_capacity: 32,
            workers: 1,
            backend_timeout_s: 120,
            ui_dir: None,
            backends: BTreeMap::from([("synthetic".to_string(), BackendSpec::Synthetic)]),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.queue_capacity == 0 || self.workers == 0 {
            return Err(ServiceError::Config("queue_capacity and workers must be at least 1".into()));
        }
        if self.max_upload_bytes == 0 {
            return Err(ServiceError::Config("max_upload_bytes must be positive".into()));
        }
        if self.backends.is_empty() {
            return Err(ServiceError::Config("at least one backend must be configured".into()));
        }
        // Names become part of file names under the data directory.
        if let Some(bad) = self
            .backends
            .keys()
            .find(|n| n.is_empty() || !n.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-'))
        {
            return Err(ServiceError::Config(format!("backend name {bad:?} must use only A-Z, a-z, 0-9, _ and -")));
        }
        Ok(())
    }

    pub fn backend_timeout(&self) -> Duration {
        Duration::from_secs(self.backend_timeout_s.max(1))
    }
}
