use std::time::Instant;

use rand::Rng;

use super::{
    chunked_sum, finish, mask_weights, rng::stream_rng, ExplainError, ExplainerConfig, ExplanationResult, FusionRule,
    Method, TargetSpec,
};
use crate::detectors::Detector;
use crate::imageproc::{apply_mask, minmax_normalize_in_place, slic_with, BinaryMaskGrid, SegmentLabelMap, SlicParams};
use crate::types::ImageBuffer;

const KEEP_PROBABILITY: f64 = 0.5;

fn stream_key(level: usize, index: usize) -> u64 {
    ((level as u64) << 32) | index as u64
}

/// Mask `index` for segmentation `level`: every segment kept with
/// probability one half.
fn segment_mask(seg: &SegmentLabelMap, seed: u64, level: usize, index: usize) -> BinaryMaskGrid {
    let mut rng = stream_rng(seed, stream_key(level, index));
    let keep: Vec<f32> = (0..seg.segment_count())
        .map(|_| if rng.random::<f64>() < KEEP_PROBABILITY { 1.0 } else { 0.0 })
        .collect();
    let values = seg.labels().iter().map(|l| keep[*l as usize]).collect();
    BinaryMaskGrid::new(seg.width(), seg.height(), values).expect("binary values on the segmentation grid")
}

/// The `n` masks D-CLOSE draws for one segmentation level.
pub fn dclose_level_masks(seg: &SegmentLabelMap, seed: u64, level: usize, n: usize) -> Vec<BinaryMaskGrid> {
    (0..n).map(|i| segment_mask(seg, seed, level, i)).collect()
}

/// Density-normalized level map: `Σ w_i m_i / Σ m_i`, zero where no mask
/// ever kept the pixel.
fn level_map(
    backend: &dyn Detector,
    image: &ImageBuffer,
    target: &TargetSpec,
    seg: &SegmentLabelMap,
    level: usize,
    n: usize,
    cfg: &ExplainerConfig,
) -> Result<Vec<f64>, ExplainError> {
    let (w, h) = (image.width(), image.height());
    let px = w * h;
    let black = ImageBuffer::black(w, h).expect("dimensions are positive");
    let sums = chunked_sum(n, 2 * px, cfg.workers, |range| {
        let masks: Vec<_> = range.map(|i| segment_mask(seg, cfg.rng_seed, level, i)).collect();
        let masked = masks
            .iter()
            .map(|m| apply_mask(image, m, &black))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = mask_weights(backend, &masked, &target.detection)?;
        let mut acc = vec![0.0; 2 * px];
        let (numer, density) = acc.split_at_mut(px);
        for (m, wt) in masks.iter().zip(weights) {
            for ((a, d), v) in numer.iter_mut().zip(density.iter_mut()).zip(m.values()) {
                let v = f64::from(*v);
                *a += wt * v;
                *d += v;
            }
        }
        Ok(acc)
    })?;
    let (numer, density) = sums.split_at(px);
    Ok(numer
        .iter()
        .zip(density)
        .map(|(a, d)| if *d > 0.0 { a / d } else { 0.0 })
        .collect())
}

/// Multi-level superpixel explanation. Levels are fused from the finest
/// (most segments) to the coarsest.
pub fn explain_dclose(
    backend: &dyn Detector,
    image: &ImageBuffer,
    target: &TargetSpec,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult, ExplainError> {
    cfg.validate()?;
    let started = Instant::now();
    let per_level = (cfg.n_masks / cfg.dclose_levels.len()).max(1);
    let mut maps = Vec::with_capacity(cfg.dclose_levels.len());
    for &level in cfg.dclose_levels.iter().rev() {
        let seg = slic_with(
            image,
            &SlicParams {
                n_segments: level,
                compactness: cfg.slic_compactness,
                ..SlicParams::default()
            },
        )?;
        log::debug!("D-CLOSE level {level}: {} segments", seg.segment_count());
        let mut map = level_map(backend, image, target, &seg, level, per_level, cfg)?;
        minmax_normalize_in_place(&mut map);
        maps.push(map);
    }
    let fused = fuse(maps, cfg.dclose_fusion);
    Ok(ExplanationResult {
        saliency: finish(fused, image.width(), image.height()),
        elapsed_s: started.elapsed().as_secs_f64(),
        method: Method::Dclose,
        config_digest: cfg.digest(),
    })
}

/// `maps` are normalized and ordered finest first.
fn fuse(maps: Vec<Vec<f64>>, rule: FusionRule) -> Vec<f64> {
    let n = maps.len() as f64;
    let mut it = maps.into_iter();
    let mut acc = it.next().expect("at least one level");
    match rule {
        FusionRule::RunningAverage => {
            for m in it {
                for (a, v) in acc.iter_mut().zip(m) {
                    *a = (*a + v) / 2.0;
                }
            }
        }
        FusionRule::Mean => {
            for m in it {
                for (a, v) in acc.iter_mut().zip(m) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{synthetic_detect, Detector, DetectorBackendDescriptor, DetectorError};
    use crate::imageproc::slic_segment;
    use crate::types::{BBox, Detection};

    fn scene() -> ImageBuffer {
        ImageBuffer::from_fn(48, 40, |r, c| {
            if (10..30).contains(&r) && (12..32).contains(&c) { [0.0, 0.0, 1.0] } else { [0.6, 0.6, 0.6] }
        })
        .unwrap()
    }

    /// Always reports the target with a fixed objectness.
    struct Constant(DetectorBackendDescriptor, f64);

    impl Detector for Constant {
        fn descriptor(&self) -> &DetectorBackendDescriptor {
            &self.0
        }
        fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
            let d = Detection::new(BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), self.1, vec![1.0]).unwrap();
            Ok(images.iter().map(|_| vec![d.clone()]).collect())
        }
    }

    #[test]
    fn single_mask_level_is_the_mask_itself() {
        let img = scene();
        let backend = Constant(
            DetectorBackendDescriptor {
                name: "c".into(),
                class_names: vec!["a".into()],
                max_batch: 8,
                supports_whitebox: false,
            },
            0.3,
        );
        let target = TargetSpec {
            detection: Detection::new(BBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), 1.0, vec![1.0]).unwrap(),
            image_id: "s".into(),
        };
        let cfg = ExplainerConfig {
            method: Method::Dclose,
            n_masks: 1,
            dclose_levels: vec![12],
            rng_seed: 5,
            ..ExplainerConfig::default()
        };
        let seg = slic_segment(&img, 12, 10.0).unwrap();
        let raw = level_map(&backend, &img, &target, &seg, 12, 1, &cfg).unwrap();
        let mask = segment_mask(&seg, 5, 12, 0);
        for (v, m) in raw.iter().zip(mask.values()) {
            // Covered pixels carry w·1/1 = w, uncovered ones 0.
            assert_eq!(*v, if *m == 1.0 { 0.3 } else { 0.0 });
        }
        let out = explain_dclose(&backend, &img, &target, &cfg).unwrap().saliency;
        let covered = mask.values().iter().filter(|m| **m == 1.0).count();
        if covered > 0 && covered < mask.values().len() {
            for (v, m) in out.values().iter().zip(mask.values()) {
                assert_eq!(*v, f64::from(*m));
            }
        }
    }

    #[test]
    fn masks_cover_every_pixel_with_defaults() {
        let img = scene();
        for level in [50, 150, 300, 600] {
            let seg = slic_segment(&img, level, 10.0).unwrap();
            let masks = dclose_level_masks(&seg, 0, level, 500);
            let mut density = vec![0.0f32; img.pixel_count()];
            for m in &masks {
                for (d, v) in density.iter_mut().zip(m.values()) {
                    *d += v;
                }
            }
            assert!(density.iter().all(|d| *d > 0.0), "level {level}");
        }
    }

    #[test]
    fn fusion_rules() {
        let maps = vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]];
        // ((1 + 0)/2 + 0)/2 = 0.25 and ((0 + 0)/2 + 1)/2 = 0.5
        assert_eq!(fuse(maps.clone(), FusionRule::RunningAverage), vec![0.25, 0.5]);
        assert_eq!(fuse(maps, FusionRule::Mean), vec![1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn end_to_end_is_deterministic_and_finite() {
        let img = scene();
        let target = TargetSpec {
            detection: synthetic_detect(&img)[0].clone(),
            image_id: "s".into(),
        };
        let run = |workers| {
            let cfg = ExplainerConfig {
                method: Method::Dclose,
                n_masks: 80,
                dclose_levels: vec![20, 60],
                rng_seed: 9,
                workers,
                ..ExplainerConfig::default()
            };
            explain_dclose(&crate::detectors::SyntheticDetector::new(), &img, &target, &cfg).unwrap()
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.saliency, b.saliency);
        assert!(a.saliency.values().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}
