use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};

/// One line of a metrics report. `view` is empty for metrics pooled over
/// all views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    pub iteration: usize,
    pub view: Option<usize>,
    pub value: f64,
}

impl ReportRow {
    pub fn new(metric: impl Into<String>, iteration: usize, view: Option<usize>, value: f64) -> Self {
        Self {
            metric: metric.into(),
            iteration,
            view,
            value,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> MbwError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => MbwError::io(path, io),
        other => MbwError::SchemaError {
            line: 0,
            key: "report".into(),
            message: format!("{other:?}"),
        },
    }
}

/// Renders rows as `metric,iteration,view,value` text.
pub fn render_report(rows: &[ReportRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(Path::new("<report>"), e))?;
    }
    w.into_inner()
        .map_err(|e| MbwError::io("<report>", e.into_error()))
}

pub fn write_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &render_report(rows)?)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| MbwError::SchemaError {
                line: i + 2,
                key: "row".into(),
                message: e.to_string(),
            })
        })
        .collect()
}
