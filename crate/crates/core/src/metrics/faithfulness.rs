use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalConfig, InsertionBaseline, MetricError, ScoreMode};
use crate::detectors::{detect, Detector};
use crate::geometry::iou;
use crate::imageproc::gaussian_blur;
use crate::types::{Detection, ImageBuffer, SaliencyMap, CHANNELS};

/// Perturbed images per detection call.
const CURVE_CHUNK: usize = 16;

/// Trapezoid integral over points whose x values increase strictly from 0
/// to 1.
pub fn auc(points: &[(f64, f64)]) -> Result<f64, MetricError> {
    if points.len() < 2 {
        return Err(MetricError::BadDomain("need at least two points".into()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(MetricError::BadDomain("non-finite point".into()));
    }
    if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
        return Err(MetricError::BadDomain("x must span exactly [0, 1]".into()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(MetricError::BadDomain("x must be strictly increasing".into()));
    }
    Ok(points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum())
}

pub fn overall(ins_auc: f64, del_auc: f64) -> f64 {
    ins_auc - del_auc
}

/// Best score of a detection matching the target: same label and
/// `iou >= gamma`. Zero when nothing matches.
pub fn target_score(detections: &[Detection], target: &Detection, gamma: f64, mode: ScoreMode) -> f64 {
    let label = target.label();
    detections
        .iter()
        .filter(|d| d.label() == label && d.class_probs().len() == target.class_probs().len())
        .filter(|d| iou(d.bbox(), target.bbox()) >= gamma)
        .map(|d| match mode {
            ScoreMode::ProbTimesObjectness => d.class_probs()[label] * d.objectness(),
            ScoreMode::ProbOnly => d.class_probs()[label],
        })
        .fold(0.0, f64::max)
}

/// Pixel indices by descending saliency; ties keep row-major order.
pub fn pixel_order(map: &SaliencyMap) -> Vec<usize> {
    let v = map.values();
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|a, b| v[*b].total_cmp(&v[*a]).then(a.cmp(b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Deletion,
    Insertion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCurve {
    pub direction: Direction,
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl PerturbationCurve {
    pub fn new(direction: Direction, points: Vec<(f64, f64)>) -> Result<Self, MetricError> {
        let auc = auc(&points)?;
        Ok(Self { direction, points, auc })
    }
}

/// Step `k` of `steps` perturbs the top `floor(k·N / steps)` pixels.
fn perturbed_count(k: usize, steps: usize, n: usize) -> usize {
    k * n / steps
}

/// Curve over a precomputed pixel ranking. Deletion writes `baseline` pixels
/// over `image`; insertion writes `image` pixels over `baseline`.
pub fn perturbation_curve(
    backend: &dyn Detector,
    image: &ImageBuffer,
    order: &[usize],
    target: &Detection,
    direction: Direction,
    cfg: &EvalConfig,
) -> Result<PerturbationCurve, MetricError> {
    cfg.validate()?;
    let n = image.pixel_count();
    if order.len() != n {
        return Err(MetricError::DimensionMismatch(format!("ranking of {} pixels for {n}", order.len())));
    }
    let (w, h) = (image.width(), image.height());
    let baseline = match (direction, cfg.insertion_baseline) {
        (Direction::Insertion, InsertionBaseline::Blur { sigma }) => gaussian_blur(image, sigma)?,
        _ => ImageBuffer::black(w, h).expect("dimensions are positive"),
    };
    let (start, fill) = match direction {
        Direction::Deletion => (image, &baseline),
        Direction::Insertion => (&baseline, image),
    };
    let steps = cfg.steps;
    let ks: Vec<usize> = (0..=steps).collect();
    let scores: Vec<Vec<f64>> = ks
        .par_chunks(CURVE_CHUNK)
        .map(|chunk| {
            let images: Vec<ImageBuffer> = chunk
                .iter()
                .map(|&k| {
                    let mut px = start.pixels().to_vec();
                    for &p in &order[..perturbed_count(k, steps, n)] {
                        let s = p * CHANNELS;
                        px[s..s + CHANNELS].copy_from_slice(&fill.pixels()[s..s + CHANNELS]);
                    }
                    ImageBuffer::new(w, h, px).expect("pixels copied from valid images")
                })
                .collect();
            Ok(detect(backend, &images)?
                .iter()
                .map(|dets| target_score(dets, target, cfg.gamma, cfg.score_mode))
                .collect())
        })
        .collect::<Result<_, MetricError>>()?;
    let points = ks
        .iter()
        .zip(scores.into_iter().flatten())
        .map(|(&k, s)| (k as f64 / steps as f64, s))
        .collect();
    PerturbationCurve::new(direction, points)
}

pub fn deletion_curve(
    backend: &dyn Detector,
    image: &ImageBuffer,
    map: &SaliencyMap,
    target: &Detection,
    cfg: &EvalConfig,
) -> Result<PerturbationCurve, MetricError> {
    check_dims(image, map)?;
    perturbation_curve(backend, image, &pixel_order(map), target, Direction::Deletion, cfg)
}

pub fn insertion_curve(
    backend: &dyn Detector,
    image: &ImageBuffer,
    map: &SaliencyMap,
    target: &Detection,
    cfg: &EvalConfig,
) -> Result<PerturbationCurve, MetricError> {
    check_dims(image, map)?;
    perturbation_curve(backend, image, &pixel_order(map), target, Direction::Insertion, cfg)
}

pub(crate) fn check_dims(image: &ImageBuffer, map: &SaliencyMap) -> Result<(), MetricError> {
    if (image.width(), image.height()) != (map.width(), map.height()) {
        return Err(MetricError::DimensionMismatch(format!(
            "saliency {}x{} for image {}x{}",
            map.width(),
            map.height(),
            image.width(),
            image.height()
        )));
    }
    Ok(())
}
