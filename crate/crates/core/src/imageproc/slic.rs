//! SLIC superpixels: k-means over `(L, a, b, x, y)` restricted to a local
//! window around each center, followed by connectivity enforcement that
//! merges undersized fragments into an adjacent segment.

use std::collections::VecDeque;

use super::ImageError;
use crate::types::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub n_segments: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            n_segments: 100,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Row-major segment labels. Labels are contiguous in `[0, segment_count)`,
/// each label occurs at least once and each segment is 4-connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    segment_count: usize,
}

impl SegmentLabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Pixel count of every segment.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.segment_count];
        for l in &self.labels {
            areas[*l as usize] += 1;
        }
        areas
    }
}

pub fn slic_segment(
    image: &ImageBuffer,
    n_segments: usize,
    compactness: f64,
) -> Result<SegmentLabelMap, ImageError> {
    slic_with(
        image,
        &SlicParams {
            n_segments,
            compactness,
            ..SlicParams::default()
        },
    )
}

pub fn slic_with(image: &ImageBuffer, params: &SlicParams) -> Result<SegmentLabelMap, ImageError> {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let k = params.n_segments;
    if k == 0 {
        return Err(ImageError::InvalidParameter("n_segments must be positive".into()));
    }
    if k > n {
        return Err(ImageError::TooManySegments { requested: k, pixels: n });
    }
    if !(params.compactness > 0.0) {
        return Err(ImageError::InvalidParameter("compactness must be > 0".into()));
    }

    let lab: Vec<[f64; 3]> = image
        .pixels()
        .chunks_exact(3)
        .map(|p| srgb_to_lab([p[0], p[1], p[2]]))
        .collect();

    let (nx, ny) = grid_shape(k, w, h);
    let cell_w = w as f64 / nx as f64;
    let cell_h = h as f64 / ny as f64;
    let step = (n as f64 / (nx * ny) as f64).sqrt();
    let spatial_weight = (params.compactness / step).powi(2);
    let win_x = cell_w.ceil() as isize;
    let win_y = cell_h.ceil() as isize;

    let mut centers: Vec<[f64; 5]> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // Cell center in pixel-index coordinates.
            let x = (i as f64 + 0.5) * cell_w - 0.5;
            let y = (j as f64 + 0.5) * cell_h - 0.5;
            let (col, row) = (x.round() as usize, y.round() as usize);
            let (best_row, best_col) = lowest_gradient(&lab, w, h, row, col);
            let (x, y) = if (best_row, best_col) == (row, col) {
                (x, y)
            } else {
                (best_col as f64, best_row as f64)
            };
            let c = lab[best_row * w + best_col];
            centers.push([c[0], c[1], c[2], x, y]);
        }
    }

    // Start from the seeding grid so no pixel is ever unassigned.
    let mut labels: Vec<usize> = (0..n)
        .map(|p| {
            let (row, col) = (p / w, p % w);
            let i = ((col as f64 / cell_w) as usize).min(nx - 1);
            let j = ((row as f64 / cell_h) as usize).min(ny - 1);
            j * nx + i
        })
        .collect();
    let mut distance = vec![f64::INFINITY; n];

    for _ in 0..params.iterations {
        distance.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c[3].round() as isize, c[4].round() as isize);
            let rows = (cy - win_y).max(0)..(cy + win_y + 1).min(h as isize);
            for row in rows {
                let cols = (cx - win_x).max(0)..(cx + win_x + 1).min(w as isize);
                for col in cols {
                    let p = row as usize * w + col as usize;
                    let q = lab[p];
                    let dc = (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) + (q[2] - c[2]).powi(2);
                    let ds = (col as f64 - c[3]).powi(2) + (row as f64 - c[4]).powi(2);
                    let d = dc + ds * spatial_weight;
                    if d < distance[p] {
                        distance[p] = d;
                        labels[p] = ci;
                    }
                }
            }
        }

        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (p, l) in labels.iter().enumerate() {
            let q = lab[p];
            let s = &mut sums[*l];
            s[0] += q[0];
            s[1] += q[1];
            s[2] += q[2];
            s[3] += (p % w) as f64;
            s[4] += (p / w) as f64;
            s[5] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                for d in 0..5 {
                    c[d] = s[d] / s[5];
                }
            }
        }
    }

    let min_size = ((n / (nx * ny)) / 4).max(1);
    Ok(enforce_connectivity(&labels, w, h, min_size))
}

/// Picks `(nx, ny)` seeds per axis: within 10% of `k` if possible, and as
/// close to square cells as possible among those.
fn grid_shape(k: usize, w: usize, h: usize) -> (usize, usize) {
    let mut best = (1, 1);
    let mut best_key = (f64::INFINITY, f64::INFINITY);
    for nx in 1..=k.min(w) {
        let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, h);
        let count_err = (nx * ny).abs_diff(k) as f64 / k as f64;
        let aspect = ((w as f64 / nx as f64) / (h as f64 / ny as f64)).ln().abs();
        let key = (if count_err <= 0.1 { 0.0 } else { count_err }, aspect);
        // `<=` prefers more columns on ties.
        if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 <= best_key.1) {
            best_key = key;
            best = (nx, ny);
        }
    }
    best
}

fn lowest_gradient(lab: &[[f64; 3]], w: usize, h: usize, row: usize, col: usize) -> (usize, usize) {
    let grad = |r: usize, c: usize| -> f64 {
        let at = |rr: usize, cc: usize| lab[rr * w + cc];
        let (l, rr) = (at(r, c.saturating_sub(1)), at(r, (c + 1).min(w - 1)));
        let (u, d) = (at(r.saturating_sub(1), c), at((r + 1).min(h - 1), c));
        (0..3).map(|i| (rr[i] - l[i]).powi(2) + (d[i] - u[i]).powi(2)).sum()
    };
    let mut best = (row, col);
    let mut best_g = grad(row, col);
    for r in row.saturating_sub(1)..=(row + 1).min(h - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(w - 1) {
            let g = grad(r, c);
            if g < best_g {
                best_g = g;
                best = (r, c);
            }
        }
    }
    best
}

fn enforce_connectivity(labels: &[usize], w: usize, h: usize, min_size: usize) -> SegmentLabelMap {
    const UNSET: u32 = u32::MAX;
    let n = w * h;
    let mut out = vec![UNSET; n];
    let mut next: u32 = 0;
    let mut queue = VecDeque::new();
    let mut component = Vec::new();

    for seed in 0..n {
        if out[seed] != UNSET {
            continue;
        }
        let (row, col) = (seed / w, seed % w);
        // Any already-finalized 4-neighbor is a merge target for small fragments.
        let adjacent = neighbors(row, col, w, h)
            .map(|q| out[q])
            .find(|l| *l != UNSET);

        component.clear();
        out[seed] = next;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            component.push(p);
            for q in neighbors(p / w, p % w, w, h) {
                if out[q] == UNSET && labels[q] == labels[seed] {
                    out[q] = next;
                    queue.push_back(q);
                }
            }
        }

        match adjacent {
            Some(target) if component.len() < min_size => {
                for p in &component {
                    out[*p] = target;
                }
            }
            _ => next += 1,
        }
    }

    SegmentLabelMap {
        width: w,
        height: h,
        labels: out,
        segment_count: next as usize,
    }
}

fn neighbors(row: usize, col: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let up = (row > 0).then(|| (row - 1) * w + col);
    let left = (col > 0).then(|| row * w + col - 1);
    let right = (col + 1 < w).then(|| row * w + col + 1);
    let down = (row + 1 < h).then(|| (row + 1) * w + col);
    [up, left, right, down].into_iter().flatten()
}

/// sRGB (D65) to CIELAB.
fn srgb_to_lab(rgb: [f32; 3]) -> [f64; 3] {
    let lin = |c: f32| {
        let c = f64::from(c);
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = (0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b) / 0.950_47;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175 * b;
    let z = (0.019_333_9 * r + 0.119_192 * g + 0.950_304_1 * b) / 1.088_83;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
