//! Deterministic pure-colour blob detector.
//!
//! A pixel belongs to class `c` when its `c` channel exceeds 0.8 and both
//! other channels are below 0.2. Every 4-connected component of at least
//! [`MIN_PIXELS`] same-class pixels becomes one detection:
//!
//! - bbox: the component's pixel bounds,
//! - `class_probs[c] = count / bbox area`, the other two `(1 - p) / 2`,
//! - `objectness = min(1, count / 500)`.
//!
//! For a fixed bbox both scores are non-decreasing in the number of visible
//! blob pixels, which makes deletion and insertion curves informative.

use std::collections::VecDeque;

use super::{Detector, DetectorBackendDescriptor, DetectorError, WhiteBoxCapture};
use crate::types::{BBox, Detection, ImageBuffer};

pub const SYNTHETIC_CLASSES: [&str; 3] = ["red", "green", "blue"];
pub const MIN_PIXELS: usize = 25;
const SATURATION_PIXELS: f64 = 500.0;
const DEFAULT_STRIDE: usize = 8;

#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    descriptor: DetectorBackendDescriptor,
}

impl SyntheticDetector {
    pub fn new() -> Self {
        Self {
            descriptor: DetectorBackendDescriptor {
                name: "synthetic".into(),
                class_names: SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect(),
                max_batch: 64,
                supports_whitebox: true,
            },
        }
    }
}

impl Default for SyntheticDetector {
    fn default() -> Self {
        Self::new()
    }
}

impl Detector for SyntheticDetector {
    fn descriptor(&self) -> &DetectorBackendDescriptor {
        &self.descriptor
    }

    fn detect_batch(&self, images: &[ImageBuffer]) -> Result<Vec<Vec<Detection>>, DetectorError> {
        Ok(images.iter().map(synthetic_detect).collect())
    }

    fn capture(&self, image: &ImageBuffer, layer: &str, target_index: usize) -> Result<WhiteBoxCapture, DetectorError> {
        synthetic_capture(image, layer, target_index)
    }
}

fn pixel_class(p: [f32; 3]) -> Option<usize> {
    (0..3).find(|&c| p[c] > 0.8 && (0..3).filter(|&o| o != c).all(|o| p[o] < 0.2))
}

struct Component {
    class: usize,
    count: usize,
    bounds: [usize; 4],
}

fn components(image: &ImageBuffer) -> Vec<Component> {
    let (w, h) = (image.width(), image.height());
    let classes: Vec<Option<usize>> = (0..w * h).map(|i| pixel_class(image.pixel(i / w, i % w))).collect();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..w * h {
        let Some(class) = classes[seed] else { continue };
        if seen[seed] {
            continue;
        }
        seen[seed] = true;
        queue.push_back(seed);
        let mut count = 0;
        let mut bounds = [usize::MAX, usize::MAX, 0, 0];
        while let Some(p) = queue.pop_front() {
            let (row, col) = (p / w, p % w);
            count += 1;
            bounds = [bounds[0].min(col), bounds[1].min(row), bounds[2].max(col), bounds[3].max(row)];
            let mut visit = |q: usize| {
                if !seen[q] && classes[q] == Some(class) {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if row > 0 {
                visit(p - w);
            }
            if col > 0 {
                visit(p - 1);
            }
            if col + 1 < w {
                visit(p + 1);
            }
            if row + 1 < h {
                visit(p + w);
            }
        }
        out.push(Component { class, count, bounds });
    }
    out
}

impl Component {
    fn bbox(&self) -> BBox {
        let [x1, y1, x2, y2] = self.bounds;
        BBox::new(x1 as f64, y1 as f64, (x2 + 1) as f64, (y2 + 1) as f64).expect("component bounds are non-empty")
    }

    fn detection(&self) -> Detection {
        let bbox = self.bbox();
        let p = (self.count as f64 / bbox.area()).clamp(0.0, 1.0);
        let mut probs = vec![(1.0 - p) / 2.0; 3];
        probs[self.class] = p;
        let objectness = (self.count as f64 / SATURATION_PIXELS).min(1.0);
        Detection::new(bbox, objectness, probs).expect("scores are within [0, 1]")
    }
}

/// Detections in row-major order of each component's first pixel.
pub fn synthetic_detect(image: &ImageBuffer) -> Vec<Detection> {
    components(image)
        .iter()
        .filter(|c| c.count >= MIN_PIXELS)
        .map(Component::detection)
        .collect()
}

fn parse_stride(layer: &str) -> Result<usize, DetectorError> {
    if layer.is_empty() || layer == "default" {
        return Ok(DEFAULT_STRIDE);
    }
    layer
        .strip_prefix("stride")
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|s| (1..=64).contains(s))
        .ok_or_else(|| DetectorError::Unsupported(format!("unknown layer {layer:?} (use stride<N>, 1 <= N <= 64)")))
}

/// White-box capture for the synthetic detector.
///
/// Layer `stride<N>` pools the image into `N x N` cells. Channel `k` holds
/// the fraction of class-`k` pixels in each cell. The gradient of the target
/// score is modelled analytically: +1 on the target class channel and -0.5
/// on the other channels, over the cells that intersect the target box, and
/// zero elsewhere.
pub fn synthetic_capture(image: &ImageBuffer, layer: &str, target_index: usize) -> Result<WhiteBoxCapture, DetectorError> {
    let stride = parse_stride(layer)?;
    let detections = synthetic_detect(image);
    let target = detections.get(target_index).ok_or_else(|| {
        DetectorError::Remote(format!(
            "target_index {target_index} out of range ({} detections)",
            detections.len()
        ))
    })?;
    let (w, h) = (image.width(), image.height());
    let (fw, fh) = (w.div_ceil(stride), h.div_ceil(stride));
    let channels = SYNTHETIC_CLASSES.len();
    let mut features = vec![0.0f32; channels * fh * fw];
    let mut counts = vec![0u32; fh * fw];
    for row in 0..h {
        for col in 0..w {
            let cell = (row / stride) * fw + col / stride;
            counts[cell] += 1;
            if let Some(c) = pixel_class(image.pixel(row, col)) {
                features[c * fh * fw + cell] += 1.0;
            }
        }
    }
    for c in 0..channels {
        for cell in 0..fh * fw {
            features[c * fh * fw + cell] /= counts[cell] as f32;
        }
    }

    let b = target.bbox();
    let mut gradients = vec![0.0f32; channels * fh * fw];
    for fy in 0..fh {
        for fx in 0..fw {
            let (cx1, cy1) = ((fx * stride) as f64, (fy * stride) as f64);
            let (cx2, cy2) = (cx1 + stride as f64, cy1 + stride as f64);
            let overlaps = cx1 < b.x2() && b.x1() < cx2 && cy1 < b.y2() && b.y1() < cy2;
            if !overlaps {
                continue;
            }
            for c in 0..channels {
                gradients[c * fh * fw + fy * fw + fx] = if c == target.label() { 1.0 } else { -0.5 };
            }
        }
    }

    WhiteBoxCapture::new(
        if layer.is_empty() { "default".to_string() } else { layer.to_string() },
        channels,
        fh,
        fw,
        features,
        gradients,
        stride as f32,
        [b.center().0 as f32, b.center().1 as f32],
    )
}
