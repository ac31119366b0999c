//! Domain types shared by every stage of the pipeline.
//!
//! All types validate their invariants on construction and are immutable
//! afterwards, so they can be shared freely between worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of colour channels in an [`ImageBuffer`].
pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("invalid bounding box [{x1}, {y1}, {x2}, {y2}]: coordinates must be finite, non-negative, with x2 > x1 and y2 > y1")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("width and height must be positive (got {width}x{height})")]
    EmptyDimensions { width: usize, height: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f32 },
}

/// Axis-aligned box in continuous pixel coordinates, origin at the top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, TypeError> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && *v >= 0.0);
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(TypeError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from COCO-style `[x, y, width, height]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, TypeError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Pixel-center membership: pixel `(row, col)` is inside when
    /// `x1 <= col + 0.5 < x2` and `y1 <= row + 0.5 < y2`.
    pub fn contains_pixel(&self, row: usize, col: usize) -> bool {
        let (cx, cy) = (col as f64 + 0.5, row as f64 + 0.5);
        self.x1 <= cx && cx < self.x2 && self.y1 <= cy && cy < self.y2
    }

    /// Column and row index ranges of the pixels inside the box under the
    /// pixel-center rule, clipped to a `width` x `height` raster.
    pub fn pixel_span(&self, width: usize, height: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let span = |lo: f64, hi: f64, limit: usize| {
            let start = ((lo - 0.5).ceil().max(0.0) as usize).min(limit);
            let end = ((hi - 0.5).ceil().max(0.0) as usize).min(limit);
            start..end.max(start)
        };
        (span(self.x1, self.x2, width), span(self.y1, self.y2, height))
    }

    /// True when the box lies inside a `width` x `height` image.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x2 <= width && self.y2 <= height
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = TypeError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// One detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    bbox: BBox,
    objectness: f64,
    class_probs: Vec<f64>,
    label: usize,
}

#[derive(Deserialize)]
struct RawDetection {
    bbox: BBox,
    objectness: f64,
    class_probs: Vec<f64>,
    #[serde(default)]
    label: Option<usize>,
}

impl TryFrom<RawDetection> for Detection {
    type Error = TypeError;

    fn try_from(raw: RawDetection) -> Result<Self, Self::Error> {
        let det = Detection::new(raw.bbox, raw.objectness, raw.class_probs)?;
        match raw.label {
            Some(label) if label != det.label => Err(TypeError::InvalidDetection(format!(
                "label {label} is not the argmax of class_probs ({})",
                det.label
            ))),
            _ => Ok(det),
        }
    }
}

impl Detection {
    /// The label is derived as the first index attaining the maximum class
    /// probability.
    pub fn new(bbox: BBox, objectness: f64, class_probs: Vec<f64>) -> Result<Self, TypeError> {
        if !(0.0..=1.0).contains(&objectness) {
            return Err(TypeError::InvalidDetection(format!(
                "objectness {objectness} outside [0, 1]"
            )));
        }
        if class_probs.is_empty() {
            return Err(TypeError::InvalidDetection("empty class_probs".into()));
        }
        if let Some(p) = class_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(TypeError::InvalidDetection(format!(
                "class probability {p} outside [0, 1]"
            )));
        }
        let label = argmax(&class_probs);
        Ok(Self {
            bbox,
            objectness,
            class_probs,
            label,
        })
    }

    pub fn bbox(&self) -> &BBox {
        &self.bbox
    }

    pub fn objectness(&self) -> f64 {
        self.objectness
    }

    pub fn class_probs(&self) -> &[f64] {
        &self.class_probs
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Probability assigned to the detection's own label.
    pub fn score(&self) -> f64 {
        self.class_probs[self.label]
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major relevance grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, TypeError> {
        if width == 0 || height == 0 {
            return Err(TypeError::EmptyDimensions { width, height });
        }
        if values.len() != width * height {
            return Err(TypeError::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(TypeError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, TypeError> {
        let values = (0..height)
            .flat_map(|row| (0..width).map(move |col| (row, col)))
            .map(|(row, col)| f(row, col))
            .collect();
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Row and column of the first (row-major) maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let i = argmax(&self.values);
        (i / self.width, i % self.width)
    }

    /// Elementwise `max - v`, which reverses the pixel ranking.
    pub fn inverted(&self) -> SaliencyMap {
        let max = self.max();
        SaliencyMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| max - v).collect(),
        }
    }
}

/// Ground-truth object annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub bbox: BBox,
    /// Dataset category id.
    pub label: u32,
    pub instance_id: String,
    /// VOC "difficult" flag; always false for COCO.
    #[serde(default)]
    pub difficult: bool,
}

/// RGB image with channel values in `[0, 1]`, stored row-major and
/// interleaved (`r, g, b, r, g, b, ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, TypeError> {
        if width == 0 || height == 0 {
            return Err(TypeError::EmptyDimensions { width, height });
        }
        let expected = width * height * CHANNELS;
        if pixels.len() != expected {
            return Err(TypeError::LengthMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        if let Some(index) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(TypeError::PixelOutOfRange {
                index,
                value: pixels[index],
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Solid-colour image.
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self, TypeError> {
        let pixels = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, pixels)
    }

    pub fn black(width: usize, height: usize) -> Result<Self, TypeError> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Result<Self, TypeError> {
        let mut pixels = Vec::with_capacity(width * height * CHANNELS);
        for row in 0..height {
            for col in 0..width {
                pixels.extend_from_slice(&f(row, col));
            }
        }
        Self::new(width, height, pixels)
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * CHANNELS);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * CHANNELS;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}
