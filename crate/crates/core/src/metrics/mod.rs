//! The seven scores for one saliency map.
//!
//! | dimension | metric | better |
//! |---|---|---|
//! | localization | Pointing Game hit, EBPG | higher |
//! | faithfulness | Insertion AUC, OA = Ins − Del | higher |
//! | faithfulness | Deletion AUC | lower |
//! | complexity | Sparsity | higher |
//! | complexity | Time (s) | lower |

mod faithfulness;
mod localization;
mod record;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{Detector, DetectorError};
use crate::imageproc::ImageError;
use crate::types::{BBox, Detection, ImageBuffer, SaliencyMap};

pub use faithfulness::{
    auc, deletion_curve, insertion_curve, overall, perturbation_curve, pixel_order, target_score, Direction,
    PerturbationCurve,
};
pub use localization::{ebpg, pg_accuracy, pointing_game_hit, sparsity};
pub use record::{read_records_csv, read_records_jsonl, write_records_csv, write_records_jsonl, EvaluationRecord, RecordMeta};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no samples")]
    EmptySample,
    #[error("saliency map has zero energy")]
    ZeroEnergy,
    #[error("curve outside the AUC domain: {0}")]
    BadDomain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// What the insertion curve starts from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InsertionBaseline {
    Black,
    Blur { sigma: f64 },
}

/// How a matched detection is scored along a perturbation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    ProbTimesObjectness,
    ProbOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub steps: usize,
    pub gamma: f64,
    pub insertion_baseline: InsertionBaseline,
    pub score_mode: ScoreMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            gamma: 0.5,
            insertion_baseline: InsertionBaseline::Black,
            score_mode: ScoreMode::ProbTimesObjectness,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.steps < 2 {
            return Err(MetricError::InvalidConfig(format!("steps must be at least 2, got {}", self.steps)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(MetricError::InvalidConfig(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if let InsertionBaseline::Blur { sigma } = self.insertion_baseline {
            if !(sigma > 0.0) {
                return Err(MetricError::InvalidConfig("blur sigma must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Scores `map` as an explanation of `target` on `image`, with `roi` the
/// ground-truth box for the localization metrics. `time_s` is copied as is.
///
/// Deletion and insertion share one pixel ranking. A zero-energy map gets
/// `ebpg: None`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_all(
    backend: &dyn Detector,
    image: &ImageBuffer,
    map: &SaliencyMap,
    time_s: f64,
    target: &Detection,
    roi: &BBox,
    meta: RecordMeta,
    cfg: &EvalConfig,
) -> Result<EvaluationRecord, MetricError> {
    cfg.validate()?;
    faithfulness::check_dims(image, map)?;
    if map.values().iter().any(|v| !v.is_finite()) {
        return Err(MetricError::BadDomain("saliency contains non-finite values".into()));
    }
    let order = pixel_order(map);
    let del = perturbation_curve(backend, image, &order, target, Direction::Deletion, cfg)?;
    let ins = perturbation_curve(backend, image, &order, target, Direction::Insertion, cfg)?;
    let ebpg = match ebpg(map, roi) {
        Ok(v) => Some(v),
        Err(MetricError::ZeroEnergy) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationRecord {
        meta,
        ins_auc: ins.auc,
        del_auc: del.auc,
        oa: overall(ins.auc, del.auc),
        pg_hit: pointing_game_hit(map, roi),
        ebpg,
        sparsity: sparsity(map),
        time_s: time_s.max(0.0),
    })
}
