use std::time::Instant;

use rand::Rng;

use super::{chunked_sum, finish, mask_weights, rng::stream_rng, ExplainError, ExplainerConfig, ExplanationResult, Method, TargetSpec};
use crate::detectors::Detector;
use crate::geometry::{cosine_sim, iou};
use crate::imageproc::{apply_mask, resample_window, BinaryMaskGrid};
use crate::types::{Detection, ImageBuffer};

/// `iou · max(0, cos(class_probs)) · proposal.objectness`.
pub fn drise_similarity(target: &Detection, proposal: &Detection) -> f64 {
    let overlap = iou(target.bbox(), proposal.bbox());
    if overlap == 0.0 {
        return 0.0;
    }
    let cos = cosine_sim(target.class_probs(), proposal.class_probs()).unwrap_or(0.0).max(0.0);
    overlap * cos * proposal.objectness()
}

/// Mask `index` of the stream keyed by `seed`.
///
/// A `grid × grid` Bernoulli(`p`) grid is stretched over a canvas one cell
/// larger than the output in each axis, and an `out_w × out_h` window is
/// read at a uniform random offset in `[0, cell)`.
pub fn generate_rise_mask(
    seed: u64,
    index: u64,
    grid: usize,
    p: f64,
    out_w: usize,
    out_h: usize,
) -> Result<BinaryMaskGrid, ExplainError> {
    if grid < 2 {
        return Err(ExplainError::InvalidConfig(format!("mask grid must be at least 2, got {grid}")));
    }
    if out_w == 0 || out_h == 0 {
        return Err(ExplainError::InvalidConfig("mask output size must be positive".into()));
    }
    let mut rng = stream_rng(seed, index);
    let cells: Vec<f32> = (0..grid * grid)
        .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect();
    let (cell_w, cell_h) = (out_w.div_ceil(grid), out_h.div_ceil(grid));
    let shift_x = rng.random::<f64>() * cell_w as f64;
    let shift_y = rng.random::<f64>() * cell_h as f64;
    let values = resample_window(&cells, grid, grid, out_w + cell_w, out_h + cell_h, shift_x, shift_y, out_w, out_h);
    Ok(BinaryMaskGrid::new(out_w, out_h, values)?)
}

pub fn generate_rise_masks(
    seed: u64,
    n: usize,
    grid: usize,
    p: f64,
    out_w: usize,
    out_h: usize,
) -> Result<Vec<BinaryMaskGrid>, ExplainError> {
    (0..n as u64).map(|i| generate_rise_mask(seed, i, grid, p, out_w, out_h)).collect()
}

/// `Σ w_i · mask_i`, min-max normalized, with `w_i` the best similarity of
/// any detection on masked image `i` to the target.
pub fn explain_drise(
    backend: &dyn Detector,
    image: &ImageBuffer,
    target: &TargetSpec,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult, ExplainError> {
    cfg.validate()?;
    let started = Instant::now();
    let (w, h) = (image.width(), image.height());
    let black = ImageBuffer::black(w, h).expect("dimensions are positive");
    let sum = chunked_sum(cfg.n_masks, w * h, cfg.workers, |range| {
        let masks = range
            .map(|i| generate_rise_mask(cfg.rng_seed, i as u64, cfg.rise_grid, cfg.rise_p, w, h))
            .collect::<Result<Vec<_>, _>>()?;
        let masked = masks
            .iter()
            .map(|m| apply_mask(image, m, &black))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = mask_weights(backend, &masked, &target.detection)?;
        let mut acc = vec![0.0; w * h];
        for (m, wt) in masks.iter().zip(weights) {
            if wt == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += wt * f64::from(*v);
            }
        }
        Ok(acc)
    })?;
    Ok(ExplanationResult {
        saliency: finish(sum, w, h),
        elapsed_s: started.elapsed().as_secs_f64(),
        method: Method::Drise,
        config_digest: cfg.digest(),
    })
}
