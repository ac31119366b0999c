//! Per-instance evaluation rows, as JSON lines and as CSV.
//!
//! Floats are written in Rust's shortest round-trip form, so a file read back
//! reproduces every value bit for bit.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Who produced a record and for which ground-truth instance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub method: String,
    pub model: String,
    pub dataset: String,
    pub image_id: String,
    pub instance_id: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    #[serde(flatten)]
    pub meta: RecordMeta,
    pub ins_auc: f64,
    pub del_auc: f64,
    pub oa: f64,
    pub pg_hit: bool,
    /// `None` when the map has zero energy.
    pub ebpg: Option<f64>,
    pub sparsity: f64,
    pub time_s: f64,
}

pub const CSV_HEADER: [&str; 13] = [
    "method", "model", "dataset", "image_id", "instance_id", "category", "Ins", "Del", "OA", "PG", "EBPG", "Sparsity",
    "Time(s)",
];

fn io_err(e: impl std::fmt::Display) -> MetricError {
    MetricError::BadDomain(format!("record I/O: {e}"))
}

pub fn write_records_jsonl<W: Write>(records: &[EvaluationRecord], mut out: W) -> Result<(), MetricError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(io_err)?;
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Blank lines are skipped.
pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<EvaluationRecord>, MetricError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io_err(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// PG is written as `1`/`0`; a missing EBPG as an empty field.
pub fn write_records_csv<W: Write>(records: &[EvaluationRecord], out: W) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for r in records {
        let m = &r.meta;
        w.write_record([
            m.method.clone(),
            m.model.clone(),
            m.dataset.clone(),
            m.image_id.clone(),
            m.instance_id.clone(),
            m.category.clone(),
            r.ins_auc.to_string(),
            r.del_auc.to_string(),
            r.oa.to_string(),
            u8::from(r.pg_hit).to_string(),
            r.ebpg.map(|v| v.to_string()).unwrap_or_default(),
            r.sparsity.to_string(),
            r.time_s.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<EvaluationRecord>, MetricError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(io_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(io_err(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| io_err(format!("{s:?}: {e}")));
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(io_err)?;
        let f = |i: usize| row[i].to_string();
        out.push(EvaluationRecord {
            meta: RecordMeta {
                method: f(0),
                model: f(1),
                dataset: f(2),
                image_id: f(3),
                instance_id: f(4),
                category: f(5),
            },
            ins_auc: num(&row[6])?,
            del_auc: num(&row[7])?,
            oa: num(&row[8])?,
            pg_hit: match &row[9] {
                "1" => true,
                "0" => false,
                other => return Err(io_err(format!("PG must be 0 or 1, got {other:?}"))),
            },
            ebpg: if row[10].is_empty() { None } else { Some(num(&row[10])?) },
            sparsity: num(&row[11])?,
            time_s: num(&row[12])?,
        });
    }
    Ok(out)
}
