//! Metric tables: one row per shift level, one Acc/Brier/ECE column group per
//! method, plus a long-form CSV for plotting.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::metrics::MetricsRow;

pub const METRICS: [&str; 3] = ["acc", "brier", "ece"];

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub levels: Vec<String>,
    pub methods: Vec<String>,
    /// `cells[level][method] = [acc, brier, ece]`
    pub cells: Vec<Vec<[f64; 3]>>,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Every (level, method) pair must be present exactly once.
pub fn build_table(rows: &[MetricsRow]) -> Result<Table> {
    if rows.is_empty() {
        return Err(Error::Empty("report rows"));
    }
    let levels = first_seen(rows.iter().map(|r| r.shift_tag.as_str()));
    let methods = first_seen(rows.iter().map(|r| r.method.as_str()));
    let mut index: HashMap<(&str, &str), &MetricsRow> = HashMap::new();
    for r in rows {
        if index.insert((&r.shift_tag, &r.method), r).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate report row for method `{}` at `{}`",
                r.method, r.shift_tag
            )));
        }
    }
    let mut cells = Vec::with_capacity(levels.len());
    for l in &levels {
        let mut row = Vec::with_capacity(methods.len());
        for m in &methods {
            let r = index.get(&(l.as_str(), m.as_str())).ok_or_else(|| {
                Error::InvalidArgument(format!("no `{m}` row for shift level `{l}`"))
            })?;
            row.push([r.acc, r.brier, r.ece]);
        }
        cells.push(row);
    }
    Ok(Table {
        levels,
        methods,
        cells,
    })
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Level |");
        for m in &self.methods {
            out.push_str(&format!(" {m} Acc | {m} Brier | {m} ECE |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(3 * self.methods.len()));
        out.push('\n');
        for (l, row) in self.levels.iter().zip(&self.cells) {
            out.push_str(&format!("| {l} |"));
            for v in row.iter().flatten() {
                out.push_str(&format!(" {v:.3} |"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_wide_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["shift_level".to_string()];
        for m in &self.methods {
            for metric in METRICS {
                header.push(format!("{m}_{metric}"));
            }
        }
        w.write_record(&header).expect("in-memory write");
        for (l, row) in self.levels.iter().zip(&self.cells) {
            let mut rec = vec![l.clone()];
            rec.extend(row.iter().flatten().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// `shift_level,method,metric,value`, one line per cell.
    pub fn to_long_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["shift_level", "method", "metric", "value"])
            .expect("in-memory write");
        for (l, row) in self.levels.iter().zip(&self.cells) {
            for (m, vals) in self.methods.iter().zip(row) {
                for (metric, v) in METRICS.iter().zip(vals) {
                    w.write_record([l.as_str(), m.as_str(), metric, &v.to_string()])
                        .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Report records as CSV with the JSON field names as columns.
pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}
