use super::ImageError;
use crate::types::{ImageBuffer, CHANNELS};

/// Per-pixel keep weights in `[0, 1]`; 1 keeps the image, 0 shows the
/// baseline. Soft after bilinear upsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMaskGrid {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl BinaryMaskGrid {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(ImageError::DimensionMismatch(format!(
                "{} mask values for a {width}x{height} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ImageError::InvalidParameter("mask values must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|v| f64::from(*v)).sum::<f64>() / self.values.len() as f64
    }
}

/// Blends `image` over `baseline`: `mask * image + (1 - mask) * baseline`.
pub fn apply_mask(
    image: &ImageBuffer,
    mask: &BinaryMaskGrid,
    baseline: &ImageBuffer,
) -> Result<ImageBuffer, ImageError> {
    let dims = (image.width(), image.height());
    if dims != (mask.width, mask.height) || dims != (baseline.width(), baseline.height()) {
        return Err(ImageError::DimensionMismatch(format!(
            "image {}x{}, mask {}x{}, baseline {}x{}",
            image.width(),
            image.height(),
            mask.width,
            mask.height,
            baseline.width(),
            baseline.height()
        )));
    }
    let mut out = Vec::with_capacity(image.pixels().len());
    let pixels = image.pixels().chunks_exact(CHANNELS);
    let base = baseline.pixels().chunks_exact(CHANNELS);
    for ((px, bx), m) in pixels.zip(base).zip(&mask.values) {
        for c in 0..CHANNELS {
            out.push((m * px[c] + (1.0 - m) * bx[c]).clamp(0.0, 1.0));
        }
    }
    Ok(ImageBuffer::from_raw_unchecked(dims.0, dims.1, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient_image(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |r, c| {
            [(r as f32 / h as f32), (c as f32 / w as f32), 0.5]
        })
        .unwrap()
    }

    #[test]
    fn identity_zero_and_half_masks() {
        let img = gradient_image(5, 4);
        let black = ImageBuffer::black(5, 4).unwrap();
        let ones = BinaryMaskGrid::filled(5, 4, 1.0).unwrap();
        assert_eq!(apply_mask(&img, &ones, &black).unwrap(), img);
        let zeros = BinaryMaskGrid::filled(5, 4, 0.0).unwrap();
        assert_eq!(apply_mask(&img, &zeros, &black).unwrap(), black);
        let half = BinaryMaskGrid::filled(5, 4, 0.5).unwrap();
        let out = apply_mask(&img, &half, &black).unwrap();
        for (o, i) in out.pixels().iter().zip(img.pixels()) {
            assert_eq!(*o, i * 0.5);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = gradient_image(5, 4);
        let mask = BinaryMaskGrid::filled(4, 4, 1.0).unwrap();
        assert!(matches!(
            apply_mask(&img, &mask, &img),
            Err(ImageError::DimensionMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn complementary_blend_reconstructs(
            m in prop::collection::vec(0.0..=1.0f32, 12),
            a in prop::collection::vec(0.0..=1.0f32, 36),
            b in prop::collection::vec(0.0..=1.0f32, 36),
        ) {
            let img = ImageBuffer::new(4, 3, a).unwrap();
            let base = ImageBuffer::new(4, 3, b).unwrap();
            let mask = BinaryMaskGrid::new(4, 3, m).unwrap();
            let x = apply_mask(&img, &mask, &base).unwrap();
            let y = apply_mask(&base, &mask, &img).unwrap();
            for i in 0..36 {
                let lhs = x.pixels()[i] + y.pixels()[i];
                let rhs = img.pixels()[i] + base.pixels()[i];
                prop_assert!((lhs - rhs).abs() < 1e-6);
            }
        }
    }
}
