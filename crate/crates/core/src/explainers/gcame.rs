use std::f64::consts::PI;
use std::time::Instant;

use super::{finish, ExplainError, ExplainerConfig, ExplanationResult, Method, TargetSpec};
use crate::detectors::WhiteBoxCapture;
use crate::imageproc::resample_cell_centered;

/// `G(i, j) = exp(-((j - cx)² + (i - cy)²) / 2σ²) / 2πσ²` on a `w × h` grid,
/// row-major, with `(cx, cy)` in grid units.
pub fn gaussian_kernel(center: (f64, f64), sigma: f64, w: usize, h: usize) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let two_s2 = 2.0 * sigma * sigma;
    let mut out = Vec::with_capacity(w * h);
    for i in 0..h {
        let di = i as f64 - center.1;
        for j in 0..w {
            let dj = j as f64 - center.0;
            out.push(norm * (-(dj * dj + di * di) / two_s2).exp());
        }
    }
    out
}

/// Gradient-weighted feature maps under a Gaussian on the target.
///
/// Channel weights are gradient means. Positive and negative channels are
/// accumulated separately and subtracted, then floored at zero, all at
/// feature resolution; the map is then resampled to the image and
/// normalized. Feature cell `(i, j)` is centered on input pixel
/// `((j + 0.5)·stride, (i + 0.5)·stride)`.
pub fn explain_gcame(
    capture: &WhiteBoxCapture,
    image_width: usize,
    image_height: usize,
    target: &TargetSpec,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult, ExplainError> {
    cfg.validate()?;
    let started = Instant::now();
    let (fw, fh) = (capture.width(), capture.height());
    let stride = f64::from(capture.stride());
    let [cx, cy] = capture.target_center().map(f64::from);
    if !(0.0..=image_width as f64).contains(&cx) || !(0.0..=image_height as f64).contains(&cy) {
        return Err(ExplainError::CaptureMismatch(format!(
            "target center ({cx}, {cy}) lies outside the {image_width}x{image_height} image"
        )));
    }
    let (gx, gy) = (cx / stride - 0.5, cy / stride - 0.5);
    if !(-0.5..=fw as f64 - 0.5).contains(&gx) || !(-0.5..=fh as f64 - 0.5).contains(&gy) {
        return Err(ExplainError::CaptureMismatch(format!(
            "stride {stride} maps the center to ({gx:.2}, {gy:.2}), outside the {fw}x{fh} feature grid"
        )));
    }
    let bbox = target.detection.bbox();
    let sigma = (cfg.gcame_sigma_scale * bbox.width().max(bbox.height()) / stride).max(f64::MIN_POSITIVE);
    let gauss = gaussian_kernel((gx, gy), sigma, fw, fh);

    let n = fw * fh;
    let mut positive = vec![0.0; n];
    let mut negative = vec![0.0; n];
    for k in 0..capture.channels() {
        let grads = capture.gradient_map(k);
        let alpha = grads.iter().map(|g| f64::from(*g)).sum::<f64>() / n as f64;
        let (acc, weight) = if alpha >= 0.0 { (&mut positive, alpha) } else { (&mut negative, -alpha) };
        for (a, f) in acc.iter_mut().zip(capture.feature_map(k)) {
            *a += weight * f64::from(*f);
        }
    }
    let map: Vec<f64> = (0..n)
        .map(|i| (gauss[i] * positive[i] - gauss[i] * negative[i]).max(0.0))
        .collect();
    let up = resample_cell_centered(&map, fw, fh, stride, image_width, image_height);
    Ok(ExplanationResult {
        saliency: finish(up, image_width, image_height),
        elapsed_s: started.elapsed().as_secs_f64(),
        method: Method::Gcame,
        config_digest: cfg.digest(),
    })
}
