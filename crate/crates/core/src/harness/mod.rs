//! Batch benchmarking over annotated datasets, and the report bundle.
//!
//! A bundle directory holds:
//!
//! | file | contents |
//! |---|---|
//! | `report.json` | the whole [`BenchmarkReport`] |
//! | `report.csv` | the results table, see [`emit_table`] |
//! | `records.jsonl` | one [`EvaluationRecord`](crate::metrics::EvaluationRecord) per line |
//! | `spider_3axis.svg`, `spider_all.svg` | radar charts |
//! | `skips.log` | one tab-separated line per skipped instance |
//! | `config.json` | the configuration snapshot |

mod aggregate;
mod bench;
mod dataset;
mod spider;
mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::detectors::DetectorError;
use crate::explainers::ExplainError;
use crate::metrics::{write_records_jsonl, MetricError};

pub use aggregate::{aggregate, Aggregate};
pub use bench::{match_instance, run_benchmark, BenchConfig, BenchmarkReport, ConfigSnapshot, ModelBackend, Skip};
pub use dataset::{
    blob_image, load_coco, load_voc, write_blob_dataset, DatasetIndex, ImageEntry, BLOB_IMAGE_SIZE, VOC_CLASSES,
};
pub use spider::{emit_spider_svg, normalize_axis, spider_axes, AxisValue, SpiderAxes, SpiderMode};
pub use table::{emit_table, parse_table, TableColumn, METRIC_ROWS, MISSING};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("image file not found: {0}")]
    MissingImage(PathBuf),
    #[error("no records to aggregate")]
    EmptyGroup,
    #[error("invalid benchmark config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const REPORT_FILES: [&str; 7] = [
    "report.json",
    "report.csv",
    "records.jsonl",
    "spider_3axis.svg",
    "spider_all.svg",
    "skips.log",
    "config.json",
];

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn pretty_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

/// Writes the bundle into `dir`, creating it if needed. Each file appears
/// complete or not at all.
pub fn write_report_bundle(report: &BenchmarkReport, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    write_records_jsonl(&report.records, &mut records)?;
    let skips: String = report
        .skips
        .iter()
        .map(|s| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                s.model,
                s.image_id,
                s.instance_id,
                s.method.as_deref().unwrap_or("*"),
                s.reason.replace(['\t', '\n'], " ")
            )
        })
        .collect();
    let files: [(&str, Vec<u8>); 7] = [
        ("report.json", pretty_json(report)),
        ("report.csv", emit_table(&report.aggregates).into_bytes()),
        ("records.jsonl", records),
        ("spider_3axis.svg", emit_spider_svg(&report.aggregates, SpiderMode::ThreeAxis).into_bytes()),
        ("spider_all.svg", emit_spider_svg(&report.aggregates, SpiderMode::AllMetrics).into_bytes()),
        ("skips.log", skips.into_bytes()),
        ("config.json", pretty_json(&report.config)),
    ];
    for (name, bytes) in files {
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

pub fn read_report(dir: impl AsRef<Path>) -> Result<BenchmarkReport, HarnessError> {
    let path = dir.as_ref().join("report.json");
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", path.display())))
}
