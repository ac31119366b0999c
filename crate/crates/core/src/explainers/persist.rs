//! Saliency PGM plus a JSON sidecar next to it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExplainError, ExplanationResult, Method};
use crate::imageproc::{decode_pgm, encode_pgm16};
use crate::types::{BBox, SaliencyMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSidecar {
    pub method: Method,
    pub config_digest: String,
    pub elapsed_s: f64,
    pub image_id: String,
    pub target_bbox: BBox,
}

fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Writes `pgm_path` (16-bit) and `pgm_path` with a `.json` extension.
pub fn save_explanation(
    result: &ExplanationResult,
    image_id: &str,
    target_bbox: &BBox,
    pgm_path: impl AsRef<Path>,
) -> Result<ExplanationSidecar, ExplainError> {
    let pgm_path = pgm_path.as_ref();
    let sidecar = ExplanationSidecar {
        method: result.method,
        config_digest: result.config_digest.clone(),
        elapsed_s: result.elapsed_s,
        image_id: image_id.to_string(),
        target_bbox: *target_bbox,
    };
    write_atomic(pgm_path, &encode_pgm16(&result.saliency))?;
    write_atomic(&sidecar_path(pgm_path), &serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn load_explanation(pgm_path: impl AsRef<Path>) -> Result<(SaliencyMap, ExplanationSidecar), ExplainError> {
    let pgm_path = pgm_path.as_ref();
    let map = decode_pgm(&std::fs::read(pgm_path)?)?;
    let sidecar = serde_json::from_slice(&std::fs::read(sidecar_path(pgm_path))?)?;
    Ok((map, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<f64> = (0..35).map(|i| i as f64 / 34.0).collect();
        let result = ExplanationResult {
            saliency: SaliencyMap::new(7, 5, values.clone()).unwrap(),
            elapsed_s: 0.25,
            method: Method::Dclose,
            config_digest: "abc".into(),
        };
        let bbox = BBox::new(1.0, 2.0, 5.0, 4.0).unwrap();
        let path = dir.path().join("img_0.pgm");
        save_explanation(&result, "img", &bbox, &path).unwrap();
        let (map, side) = load_explanation(&path).unwrap();
        assert_eq!((map.width(), map.height()), (7, 5));
        for (a, b) in map.values().iter().zip(&values) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        assert_eq!(side.method, Method::Dclose);
        assert_eq!(side.target_bbox, bbox);
        let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("img_0.json")).unwrap()).unwrap();
        assert_eq!(json["method"], "D-CLOSE");
        assert_eq!(json["target_bbox"], serde_json::json!([1.0, 2.0, 5.0, 4.0]));
    }
}
