use super::MetricError;
use crate::imageproc::minmax_normalize_in_place;
use crate::types::{BBox, SaliencyMap};

/// True when any pixel attaining the global maximum has its center inside
/// `roi`.
pub fn pointing_game_hit(map: &SaliencyMap, roi: &BBox) -> bool {
    let max = map.max();
    let w = map.width();
    map.values()
        .iter()
        .enumerate()
        .any(|(i, v)| *v == max && roi.contains_pixel(i / w, i % w))
}

pub fn pg_accuracy(hits: usize, misses: usize) -> Result<f64, MetricError> {
    let n = hits + misses;
    if n == 0 {
        return Err(MetricError::EmptySample);
    }
    Ok(hits as f64 / n as f64)
}

/// Share of the map's energy inside `roi`, with negative values clamped to 0.
pub fn ebpg(map: &SaliencyMap, roi: &BBox) -> Result<f64, MetricError> {
    let w = map.width();
    let (cols, rows) = roi.pixel_span(w, map.height());
    let total: f64 = map.values().iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(MetricError::ZeroEnergy);
    }
    let inside: f64 = rows
        .flat_map(|r| {
            let cols = cols.clone();
            map.values()[r * w + cols.start..r * w + cols.end].iter()
        })
        .map(|v| v.max(0.0))
        .sum();
    Ok((inside / total).clamp(0.0, 1.0))
}

/// `1 / mean` of the min-max normalized map; at least 1, and exactly 1 for a
/// constant map.
pub fn sparsity(map: &SaliencyMap) -> f64 {
    let mut values = map.values().to_vec();
    minmax_normalize_in_place(&mut values);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (1.0 / mean).max(1.0)
}
