use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use odexai::detectors::{open_backend, BackendOptions, BackendSpec, Detector};

use crate::ServiceError;

/// Named backends, connected on first use. A failed connection is retried
/// on the next request.
pub struct Registry {
    specs: BTreeMap<String, BackendSpec>,
    timeout: Duration,
    open: Mutex<BTreeMap<String, Arc<dyn Detector>>>,
}

impl Registry {
    pub fn new(specs: BTreeMap<String, BackendSpec>, timeout: Duration) -> Self {
        Self {
            specs,
            timeout,
            open: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    /// Blocks while a new backend performs its handshake.
    pub fn get(&self, name: &str) -> Result<Arc<dyn Detector>, ServiceError> {
        let spec = self
            .specs
            .get(name)
            .ok_or_else(|| ServiceError::UnknownBackend(name.to_string()))?;
        if let Some(b) = self.open.lock().expect("registry lock").get(name) {
            return Ok(b.clone());
        }
        let options = BackendOptions {
            pool_size: 1,
            timeout: self.timeout,
        };
        let backend = open_backend(spec, &options)?;
        self.open
            .lock()
            .expect("registry lock")
            .entry(name.to_string())
            .or_insert(backend.clone());
        Ok(backend)
    }
}
