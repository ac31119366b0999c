use super::ImageError;
use crate::types::{ImageBuffer, CHANNELS};

/// Normalized 1-D Gaussian weights over `[-r, r]` with `r = ceil(3 sigma)`.
pub fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut w: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable Gaussian blur with clamp-to-edge padding.
pub fn gaussian_blur(image: &ImageBuffer, sigma: f64) -> Result<ImageBuffer, ImageError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(ImageError::InvalidParameter(format!("blur sigma must be > 0, got {sigma}")));
    }
    let weights = gaussian_weights(sigma);
    let radius = (weights.len() / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let src = image.pixels();

    let mut horizontal = vec![0.0f64; src.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, wk) in weights.iter().enumerate() {
                    let x = (col as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += wk * f64::from(src[(row * w + x) * CHANNELS + c]);
                }
                horizontal[(row * w + col) * CHANNELS + c] = acc;
            }
        }
    }

    let mut out = vec![0.0f32; src.len()];
    for row in 0..h {
        for col in 0..w {
            for c in 0..CHANNELS {
                let mut acc = 0.0;
                for (k, wk) in weights.iter().enumerate() {
                    let y = (row as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += wk * horizontal[(y * w + col) * CHANNELS + c];
                }
                out[(row * w + col) * CHANNELS + c] = (acc as f32).clamp(0.0, 1.0);
            }
        }
    }
    Ok(ImageBuffer::from_raw_unchecked(w, h, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_unchanged() {
        let img = ImageBuffer::filled(9, 7, [0.2, 0.4, 0.6]).unwrap();
        let out = gaussian_blur(&img, 1.7).unwrap();
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn single_bright_pixel_matches_direct_convolution() {
        let (w, h) = (15, 15);
        let img = ImageBuffer::from_fn(w, h, |r, c| if (r, c) == (7, 7) { [1.0; 3] } else { [0.0; 3] }).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();

        // Direct 2-D oracle: normalized isotropic kernel evaluated at the offset.
        let radius = 3i64;
        let g = |dx: i64, dy: i64| (-((dx * dx + dy * dy) as f64) / 2.0).exp();
        let mut total = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                total += g(dx, dy);
            }
        }
        for (r, c) in [(7usize, 7usize), (7, 8), (5, 9), (4, 7)] {
            let expected = g(c as i64 - 7, r as i64 - 7) / total;
            let got = f64::from(out.pixel(r, c)[0]);
            assert!((got - expected).abs() < 1e-6, "({r},{c}): {got} vs {expected}");
        }
    }

    #[test]
    fn mean_preserved_with_constant_border() {
        let img = ImageBuffer::from_fn(32, 32, |r, c| {
            if (10..22).contains(&r) && (12..20).contains(&c) {
                [0.9, 0.3, ((r + c) % 5) as f32 / 5.0]
            } else {
                [0.1, 0.1, 0.1]
            }
        })
        .unwrap();
        let out = gaussian_blur(&img, 1.5).unwrap();
        let mean = |i: &ImageBuffer| i.pixels().iter().map(|v| f64::from(*v)).sum::<f64>() / i.pixels().len() as f64;
        assert!((mean(&img) - mean(&out)).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_sigma() {
        let img = ImageBuffer::black(2, 2).unwrap();
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
    }
}
