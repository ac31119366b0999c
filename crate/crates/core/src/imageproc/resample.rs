use super::BinaryMaskGrid;

/// Bilinear sample of a `sw` x `sh` grid at fractional coordinates, clamped to
/// the grid and to the range of the four contributing cells.
fn sample<T: Copy + Into<f64>>(src: &[T], sw: usize, sh: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (sw - 1) as f64);
    let y = y.clamp(0.0, (sh - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let at = |xx: usize, yy: usize| -> f64 { src[yy * sw + xx].into() };
    let (a, b, c, d) = (at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1));
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    let v = top + (bottom - top) * ty;
    let lo = a.min(b).min(c).min(d);
    let hi = a.max(b).max(c).max(d);
    v.clamp(lo, hi)
}

/// Stretches a grid across a `canvas_w` x `canvas_h` canvas with aligned
/// corners, then reads an `out_w` x `out_h` window whose origin sits at
/// `(shift_x, shift_y)` on the canvas.
#[allow(clippy::too_many_arguments)]
pub fn resample_window(
    src: &[f32],
    sw: usize,
    sh: usize,
    canvas_w: usize,
    canvas_h: usize,
    shift_x: f64,
    shift_y: f64,
    out_w: usize,
    out_h: usize,
) -> Vec<f32> {
    let scale = |s: usize, canvas: usize| {
        if s > 1 && canvas > 1 {
            (s - 1) as f64 / (canvas - 1) as f64
        } else {
            0.0
        }
    };
    let (kx, ky) = (scale(sw, canvas_w), scale(sh, canvas_h));
    let xs: Vec<f64> = (0..out_w).map(|x| (x as f64 + shift_x) * kx).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for row in 0..out_h {
        let sy = (row as f64 + shift_y) * ky;
        out.extend(xs.iter().map(|sx| sample(src, sw, sh, *sx, sy) as f32));
    }
    out
}

/// Upsamples a mask grid to `out_w` x `out_h` with aligned corners, offset by
/// `(shift_x, shift_y)` output pixels (reads past the far edge clamp).
pub fn bilinear_upsample(
    grid: &BinaryMaskGrid,
    out_w: usize,
    out_h: usize,
    shift_x: f64,
    shift_y: f64,
) -> BinaryMaskGrid {
    let values = resample_window(
        grid.values(),
        grid.width(),
        grid.height(),
        out_w,
        out_h,
        shift_x,
        shift_y,
        out_w,
        out_h,
    );
    BinaryMaskGrid::from_raw_unchecked(out_w, out_h, values)
}

/// Resamples a feature-resolution grid where each cell spans `stride` output
/// pixels; output pixel centers map to `(x + 0.5) / stride - 0.5`.
pub fn resample_cell_centered(
    src: &[f64],
    sw: usize,
    sh: usize,
    stride: f64,
    out_w: usize,
    out_h: usize,
) -> Vec<f64> {
    let xs: Vec<f64> = (0..out_w).map(|x| (x as f64 + 0.5) / stride - 0.5).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for row in 0..out_h {
        let sy = (row as f64 + 0.5) / stride - 0.5;
        out.extend(xs.iter().map(|sx| sample(src, sw, sh, *sx, sy)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_stay_ones() {
        let g = BinaryMaskGrid::filled(3, 3, 1.0).unwrap();
        let up = bilinear_upsample(&g, 17, 11, 0.0, 0.0);
        assert!(up.values().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn checkerboard_corners() {
        let g = BinaryMaskGrid::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let up = bilinear_upsample(&g, 4, 4, 0.0, 0.0);
        assert_eq!(up.get(0, 0), 1.0);
        assert_eq!(up.get(0, 3), 0.0);
        assert_eq!(up.get(3, 0), 0.0);
        assert_eq!(up.get(3, 3), 1.0);
    }

    #[test]
    fn linear_midpoint() {
        let g = BinaryMaskGrid::new(2, 1, vec![0.0, 1.0]).unwrap();
        let up = bilinear_upsample(&g, 3, 1, 0.0, 0.0);
        assert_eq!(up.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_values_recovered_at_sample_centers() {
        let src: Vec<f32> = (0..12).map(|i| i as f32 / 11.0).collect();
        let g = BinaryMaskGrid::new(4, 3, src.clone()).unwrap();
        // 4 -> 10 puts source column i at output column 3i.
        let up = bilinear_upsample(&g, 10, 7, 0.0, 0.0);
        for r in 0..3 {
            for c in 0..4 {
                assert_eq!(up.get(3 * r, 3 * c), src[r * 4 + c]);
            }
        }
    }

    #[test]
    fn cell_centered_alignment() {
        let out = resample_cell_centered(&[0.0, 1.0], 2, 1, 4.0, 8, 1);
        // Pixels left of the first cell center and right of the last clamp.
        assert_eq!(&out[..2], &[0.0, 0.0]);
        assert_eq!(&out[6..], &[1.0, 1.0]);
        assert!((out[3] - 0.375).abs() < 1e-12);
        assert!((out[3] + out[4] - 1.0).abs() < 1e-12);
        assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn upsample_preserves_range(
            vals in prop::collection::vec(0.0..=1.0f32, 9),
            ow in 3usize..20, oh in 3usize..20,
            sx in 0.0..3.0f64, sy in 0.0..3.0f64,
        ) {
            let g = BinaryMaskGrid::new(3, 3, vals.clone()).unwrap();
            let up = bilinear_upsample(&g, ow, oh, sx, sy);
            let lo = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            prop_assert!(up.values().iter().all(|v| *v >= lo && *v <= hi));
        }
    }
}
