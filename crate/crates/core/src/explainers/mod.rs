//! Saliency explanations for one target detection.
//!
//! - [`explain_drise`]: random grid masks weighted by how well the target
//!   survives on the masked image.
//! - [`explain_dclose`]: the same weighting over SLIC superpixel masks at
//!   several granularities, density-normalized and fused finest to coarsest.
//! - [`explain_gcame`]: gradient-weighted feature maps under a Gaussian
//!   centered on the target.
//!
//! Every random draw comes from a counter-based generator keyed by the seed
//! and the mask index, and partial sums are combined in a fixed order, so
//! results are bit-identical for any worker count.

mod dclose;
mod drise;
mod gcame;
mod persist;
mod rng;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detectors::{detect, Detector, DetectorError};
use crate::imageproc::ImageError;
use crate::types::{Detection, ImageBuffer, SaliencyMap};

pub use dclose::{dclose_level_masks, explain_dclose};
pub use drise::{drise_similarity, explain_drise, generate_rise_mask, generate_rise_masks};
pub use gcame::{explain_gcame, gaussian_kernel};
pub use persist::{load_explanation, save_explanation, ExplanationSidecar};
pub use rng::stream_rng;

/// Masks evaluated per unit of work. Fixed so that the summation order, and
/// therefore every bit of the result, does not depend on the worker count.
pub(crate) const MASK_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid explainer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("capture does not fit the target: {0}")]
    CaptureMismatch(String),
    #[error("target detection not found on the unperturbed image")]
    TargetNotFound,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "D-RISE", alias = "drise")]
    Drise,
    #[serde(rename = "D-CLOSE", alias = "dclose")]
    Dclose,
    #[serde(rename = "G-CAME", alias = "gcame")]
    Gcame,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Drise, Method::Dclose, Method::Gcame];

    pub fn name(self) -> &'static str {
        match self {
            Method::Drise => "D-RISE",
            Method::Dclose => "D-CLOSE",
            Method::Gcame => "G-CAME",
        }
    }

    /// Lower-case, punctuation-free form for file names and CLI flags.
    pub fn slug(self) -> &'static str {
        match self {
            Method::Drise => "drise",
            Method::Dclose => "dclose",
            Method::Gcame => "gcame",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.slug() == key)
            .ok_or_else(|| ExplainError::InvalidConfig(format!("unknown method {s:?} (drise, dclose, gcame)")))
    }
}

/// How D-CLOSE combines its per-level maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    /// `F = (F + normalize(level)) / 2`, finest level first.
    RunningAverage,
    /// Equal-weight mean of the normalized level maps.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub method: Method,
    pub n_masks: usize,
    pub rise_grid: usize,
    pub rise_p: f64,
    pub dclose_levels: Vec<usize>,
    pub dclose_fusion: FusionRule,
    pub slic_compactness: f64,
    pub gamma_iou: f64,
    pub gcame_sigma_scale: f64,
    pub gcame_layer: String,
    pub rng_seed: u64,
    /// Threads for masked inference; 0 uses all cores. Not part of the digest
    /// because it never changes the output.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            method: Method::Drise,
            n_masks: 2000,
            rise_grid: 16,
            rise_p: 0.5,
            dclose_levels: vec![50, 150, 300, 600],
            dclose_fusion: FusionRule::RunningAverage,
            slic_compactness: 10.0,
            gamma_iou: 0.5,
            gcame_sigma_scale: 0.25,
            gcame_layer: "stride8".into(),
            rng_seed: 0,
            workers: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ExplainError> {
        let bad = |m: String| Err(ExplainError::InvalidConfig(m));
        if self.n_masks == 0 {
            return bad("n_masks must be at least 1".into());
        }
        if self.rise_grid < 2 {
            return bad(format!("rise_grid must be at least 2, got {}", self.rise_grid));
        }
        if !(0.0..=1.0).contains(&self.rise_p) {
            return bad(format!("rise_p must lie in [0, 1], got {}", self.rise_p));
        }
        if self.dclose_levels.is_empty() || self.dclose_levels.contains(&0) {
            return bad("dclose_levels must be nonempty and positive".into());
        }
        if self.dclose_levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("dclose_levels must be strictly increasing, got {:?}", self.dclose_levels));
        }
        if !(self.slic_compactness > 0.0) {
            return bad("slic_compactness must be > 0".into());
        }
        if !(self.gamma_iou > 0.0 && self.gamma_iou <= 1.0) {
            return bad(format!("gamma_iou must lie in (0, 1], got {}", self.gamma_iou));
        }
        if !(self.gcame_sigma_scale > 0.0 && self.gcame_sigma_scale.is_finite()) {
            return bad("gcame_sigma_scale must be > 0".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub detection: Detection,
    pub image_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationResult {
    pub saliency: SaliencyMap,
    pub elapsed_s: f64,
    pub method: Method,
    pub config_digest: String,
}

/// Runs `cfg.method`. G-CAME asks the backend for a white-box capture of the
/// detection that best matches the target on the unperturbed image; the
/// capture time is included in `elapsed_s`.
pub fn explain(
    backend: &dyn Detector,
    image: &ImageBuffer,
    target: &TargetSpec,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult, ExplainError> {
    match cfg.method {
        Method::Drise => explain_drise(backend, image, target, cfg),
        Method::Dclose => explain_dclose(backend, image, target, cfg),
        Method::Gcame => {
            cfg.validate()?;
            let started = Instant::now();
            let dets = detect(backend, std::slice::from_ref(image))?.pop().unwrap_or_default();
            let index = best_match(&target.detection, &dets).ok_or(ExplainError::TargetNotFound)?;
            let capture = backend.capture(image, &cfg.gcame_layer, index)?;
            let mut result = explain_gcame(&capture, image.width(), image.height(), target, cfg)?;
            result.elapsed_s = started.elapsed().as_secs_f64();
            Ok(result)
        }
    }
}

/// Index of the detection most similar to `target`, if any is similar at all.
pub fn best_match(target: &Detection, candidates: &[Detection]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, d)| (i, drise_similarity(target, d)))
        .filter(|(_, s)| *s > 0.0)
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i)
}

/// Runs `work` over `[0, n)` in chunks of [`MASK_CHUNK`] and sums the
/// returned vectors elementwise in chunk order.
pub(crate) fn chunked_sum<F>(n: usize, len: usize, workers: usize, work: F) -> Result<Vec<f64>, ExplainError>
where
    F: Fn(std::ops::Range<usize>) -> Result<Vec<f64>, ExplainError> + Sync,
{
    use rayon::prelude::*;
    let ranges: Vec<_> = (0..n).step_by(MASK_CHUNK).map(|s| s..(s + MASK_CHUNK).min(n)).collect();
    let run = || ranges.par_iter().map(|r| work(r.clone())).collect::<Result<Vec<_>, _>>();
    let partials = if workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ExplainError::InvalidConfig(format!("cannot start {workers} workers: {e}")))?
            .install(run)?
    };
    let mut total = vec![0.0; len];
    for p in partials {
        debug_assert_eq!(p.len(), len);
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    Ok(total)
}

/// Max similarity of each masked image's detections to the target.
pub(crate) fn mask_weights(
    backend: &dyn Detector,
    masked: &[ImageBuffer],
    target: &Detection,
) -> Result<Vec<f64>, ExplainError> {
    Ok(detect(backend, masked)?
        .iter()
        .map(|dets| dets.iter().map(|d| drise_similarity(target, d)).fold(0.0, f64::max))
        .collect())
}

pub(crate) fn finish(values: Vec<f64>, width: usize, height: usize) -> SaliencyMap {
    let mut values = values;
    crate::imageproc::minmax_normalize_in_place(&mut values);
    SaliencyMap::new(width, height, values).expect("normalized values are finite")
}
