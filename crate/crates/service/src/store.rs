//! Content-addressed artifact store: every blob lives at
//! `<root>/artifacts/<sha256 hex>`, so a ref always re-hashes to itself.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::ServiceError;

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
}

pub fn content_ref(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn is_ref(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// Writes through a unique temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".{}.{}.partial", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

impl ArtifactStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = root.as_ref().join("artifacts");
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    /// Stores `bytes` and returns their ref. Storing the same bytes again is
    /// a no-op.
    pub fn put(&self, bytes: &[u8]) -> Result<String, ServiceError> {
        let r = content_ref(bytes);
        let path = self.dir.join(&r);
        if !path.is_file() {
            write_atomic(&path, bytes)?;
        }
        Ok(r)
    }

    pub fn get(&self, r: &str) -> Result<Vec<u8>, ServiceError> {
        if !is_ref(r) {
            return Err(ServiceError::UnknownArtifact(r.to_string()));
        }
        match std::fs::read(self.dir.join(r)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(ServiceError::UnknownArtifact(r.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn contains(&self, r: &str) -> bool {
        is_ref(r) && self.dir.join(r).is_file()
    }
}
