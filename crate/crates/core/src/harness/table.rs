//! The results table: one column per `(dataset, model, method)` and one row
//! per metric, under three header rows.
//!
//! ```text
//! dataset,blobs,blobs
//! model,synthetic,synthetic
//! method,D-RISE,D-CLOSE
//! Ins,0.81,0.86
//! ...
//! ```
//!
//! PG and EBPG are fractions in `[0, 1]`, written like every other value in
//! shortest round-trip form so that [`parse_table`] recovers them exactly.
//! A missing value is written as `—`.

use serde::{Deserialize, Serialize};

use super::{Aggregate, HarnessError};

pub const METRIC_ROWS: [&str; 7] = ["Ins", "Del", "OA", "PG", "EBPG", "Sparsity", "Time(s)"];
pub const MISSING: &str = "—";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub dataset: String,
    pub model: String,
    pub method: String,
    /// In [`METRIC_ROWS`] order.
    pub values: [Option<f64>; 7],
}

impl From<&Aggregate> for TableColumn {
    fn from(a: &Aggregate) -> Self {
        Self {
            dataset: a.dataset.clone(),
            model: a.model.clone(),
            method: a.method.clone(),
            values: [Some(a.ins), Some(a.del), Some(a.oa), Some(a.pg), a.ebpg, Some(a.sparsity), Some(a.time_s)],
        }
    }
}

pub fn emit_table(aggs: &[Aggregate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = |label: &str, f: fn(&Aggregate) -> &str| {
        std::iter::once(label.to_string()).chain(aggs.iter().map(|a| f(a).to_string())).collect::<Vec<_>>()
    };
    let rows = [
        header("dataset", |a| &a.dataset),
        header("model", |a| &a.model),
        header("method", |a| &a.method),
    ];
    for row in rows {
        w.write_record(row).expect("in-memory CSV");
    }
    let columns: Vec<TableColumn> = aggs.iter().map(TableColumn::from).collect();
    for (i, name) in METRIC_ROWS.iter().enumerate() {
        let cells = columns
            .iter()
            .map(|c| c.values[i].map(|v| v.to_string()).unwrap_or_else(|| MISSING.to_string()));
        w.write_record(std::iter::once(name.to_string()).chain(cells)).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV of UTF-8 strings")
}

pub fn parse_table(text: &str) -> Result<Vec<TableColumn>, HarnessError> {
    let bad = |m: String| HarnessError::Parse(format!("results table: {m}"));
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rd.records().collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))?;
    let labels: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap_or("")).collect();
    let expected: Vec<&str> = ["dataset", "model", "method"].into_iter().chain(METRIC_ROWS).collect();
    if labels != expected {
        return Err(bad(format!("row labels {labels:?}, expected {expected:?}")));
    }
    let n = rows[0].len() - 1;
    let mut out = Vec::with_capacity(n);
    for j in 1..=n {
        let mut values = [None; 7];
        for (i, v) in values.iter_mut().enumerate() {
            let cell = rows[3 + i].get(j).ok_or_else(|| bad(format!("row {} is short", METRIC_ROWS[i])))?;
            *v = if cell == MISSING {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|_| bad(format!("{cell:?} is not a number")))?)
            };
        }
        out.push(TableColumn {
            dataset: rows[0][j].to_string(),
            model: rows[1][j].to_string(),
            method: rows[2][j].to_string(),
            values,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn agg(method: &str, ebpg: Option<f64>) -> Aggregate {
        Aggregate {
            method: method.into(),
            model: "YOLOX".into(),
            dataset: "MS-COCO".into(),
            n_records: 3,
            n_categories: 2,
            ins: 0.908,
            del: 0.027,
            oa: 0.908 - 0.027,
            pg: 0.8786,
            ebpg,
            sparsity: 25.02,
            time_s: 70.12,
            pg_record_mean: 0.8,
            ebpg_record_mean: ebpg,
        }
    }

    #[test]
    fn two_methods_make_a_seven_by_two_table() {
        let text = emit_table(&[agg("D-CLOSE", Some(0.3545)), agg("G-CAME", None)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[2], "method,D-CLOSE,G-CAME");
        assert_eq!(lines[7], "EBPG,0.3545,—");
        let cols = parse_table(&text).unwrap();
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[1].values[4], None);
        assert_eq!(cols[0], TableColumn::from(&agg("D-CLOSE", Some(0.3545))));
    }

    #[test]
    fn rejects_wrong_layout() {
        assert!(parse_table("dataset,a\nmodel,b\n").is_err());
        let text = emit_table(&[agg("D-RISE", None)]).replace("Sparsity,25.02", "Sparsity,lots");
        assert!(parse_table(&text).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            vals in prop::collection::vec((any::<f64>(), prop::option::of(any::<f64>())), 1..5),
            name in "[A-Za-z ,\"-]{1,10}",
        ) {
            let aggs: Vec<Aggregate> = vals
                .iter()
                .filter(|(v, e)| v.is_finite() && e.is_none_or(f64::is_finite))
                .map(|(v, e)| Aggregate { ins: *v, ebpg: *e, method: name.clone(), ..agg("x", None) })
                .collect();
            let cols: Vec<TableColumn> = aggs.iter().map(TableColumn::from).collect();
            prop_assert_eq!(parse_table(&emit_table(&aggs)).unwrap(), cols);
        }
    }
}
