//! Radar charts comparing methods after per-axis normalization.
//!
//! Each axis maps the methods being compared onto `[0, 1]` with
//! `v' = (v - worst) / (best - worst)`, so the best method sits on the rim and
//! the worst at the center. This scheme is relative: it ranks methods against
//! each other and says nothing about absolute quality, which is why every
//! axis also carries its raw value.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Aggregate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpiderMode {
    /// OA, EBPG and Sparsity: one metric per dimension.
    ThreeAxis,
    /// OA, Ins, 1 − Del, PG, EBPG and Sparsity.
    AllMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Oa,
    Ins,
    OneMinusDel,
    Pg,
    Ebpg,
    Sparsity,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Oa => "OA",
            Axis::Ins => "Ins",
            Axis::OneMinusDel => "1-Del",
            Axis::Pg => "PG",
            Axis::Ebpg => "EBPG",
            Axis::Sparsity => "Sparsity",
        }
    }

    /// Every axis is oriented so that larger is better.
    fn raw(self, a: &Aggregate) -> Option<f64> {
        match self {
            Axis::Oa => Some(a.oa),
            Axis::Ins => Some(a.ins),
            Axis::OneMinusDel => Some(1.0 - a.del),
            Axis::Pg => Some(a.pg),
            Axis::Ebpg => a.ebpg,
            Axis::Sparsity => Some(a.sparsity),
        }
    }
}

impl SpiderMode {
    fn axes(self) -> &'static [Axis] {
        match self {
            SpiderMode::ThreeAxis => &[Axis::Oa, Axis::Ebpg, Axis::Sparsity],
            SpiderMode::AllMetrics => &[Axis::Oa, Axis::Ins, Axis::OneMinusDel, Axis::Pg, Axis::Ebpg, Axis::Sparsity],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisValue {
    pub axis: String,
    /// In `[0, 1]`; 0 when the raw value is missing.
    pub normalized: f64,
    pub raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiderAxes {
    pub method: String,
    pub values: Vec<AxisValue>,
}

/// Min-max normalization where larger is better. Values that are all equal,
/// or a single present value, map to 1. Missing values map to 0.
pub fn normalize_axis(values: &[Option<f64>]) -> Vec<f64> {
    let present = values.iter().flatten().copied();
    let (worst, best) = present.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    values
        .iter()
        .map(|v| match v {
            None => 0.0,
            Some(_) if !(best > worst) => 1.0,
            Some(v) => ((v - worst) / (best - worst)).clamp(0.0, 1.0),
        })
        .collect()
}

/// Axis values for each aggregate, normalized across all of `aggs`.
pub fn spider_axes(aggs: &[Aggregate], mode: SpiderMode) -> Vec<SpiderAxes> {
    let columns: Vec<(Axis, Vec<Option<f64>>, Vec<f64>)> = mode
        .axes()
        .iter()
        .map(|&axis| {
            let raw: Vec<_> = aggs.iter().map(|a| axis.raw(a)).collect();
            let norm = normalize_axis(&raw);
            (axis, raw, norm)
        })
        .collect();
    aggs.iter()
        .enumerate()
        .map(|(i, a)| SpiderAxes {
            method: a.method.clone(),
            values: columns
                .iter()
                .map(|(axis, raw, norm)| AxisValue {
                    axis: axis.name().to_string(),
                    normalized: norm[i],
                    raw: raw[i],
                })
                .collect(),
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL: f64 = 380.0;
const RADIUS: f64 = 120.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_raw(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "—".into())
}

/// One panel per `(dataset, model)` pair in order of first appearance, each
/// normalizing across the methods it contains. Output depends only on
/// `aggs` and `mode`.
pub fn emit_spider_svg(aggs: &[Aggregate], mode: SpiderMode) -> String {
    let mut panels: Vec<((&str, &str), Vec<Aggregate>)> = Vec::new();
    for a in aggs {
        let key = (a.dataset.as_str(), a.model.as_str());
        match panels.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(a.clone()),
            None => panels.push((key, vec![a.clone()])),
        }
    }
    let axes = mode.axes();
    let width = PANEL * panels.len().max(1) as f64;
    let legend_rows = panels.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let height = PANEL + 18.0 * legend_rows as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let angle = |k: usize| -std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::PI * k as f64 / axes.len() as f64;
    for (p, ((dataset, model), group)) in panels.iter().enumerate() {
        let (cx, cy) = (PANEL * p as f64 + PANEL / 2.0, PANEL / 2.0 + 10.0);
        let point = |k: usize, r: f64| (cx + r * RADIUS * angle(k).cos(), cy + r * RADIUS * angle(k).sin());
        let _ = writeln!(svg, r#"<g class="panel" data-dataset="{}" data-model="{}">"#, escape(dataset), escape(model));
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="18" text-anchor="middle" font-weight="bold">{} / {}</text>"#,
            escape(dataset),
            escape(model)
        );
        for ring in [0.25, 0.5, 0.75, 1.0] {
            let pts: Vec<String> = (0..axes.len())
                .map(|k| {
                    let (x, y) = point(k, ring);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(svg, r##"<polygon points="{}" fill="none" stroke="#ccc"/>"##, pts.join(" "));
        }
        for (k, axis) in axes.iter().enumerate() {
            let (x, y) = point(k, 1.0);
            let (lx, ly) = point(k, 1.18);
            let _ = writeln!(svg, r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{x:.2}" y2="{y:.2}" stroke="#999"/>"##);
            let _ = writeln!(svg, r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" dominant-baseline="middle">{}</text>"#, axis.name());
        }
        for (m, spider) in spider_axes(group, mode).iter().enumerate() {
            let color = PALETTE[m % PALETTE.len()];
            let pts: Vec<String> = spider
                .values
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let (x, y) = point(k, v.normalized);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let title: Vec<String> = spider.values.iter().map(|v| format!("{} {}", v.axis, fmt_raw(v.raw))).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="method" data-method="{}" points="{}" fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="2"><title>{}: {}</title></polygon>"#,
                escape(&spider.method),
                pts.join(" "),
                escape(&spider.method),
                escape(&title.join(", "))
            );
            let ly = PANEL + 18.0 * m as f64;
            let lx = PANEL * p as f64 + 20.0;
            let _ = writeln!(svg, r#"<rect x="{lx:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, ly - 9.0);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 16.0, escape(&spider.method));
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
