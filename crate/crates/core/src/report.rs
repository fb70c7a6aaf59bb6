//! Long-format report rows and their JSON/CSV serialization. One value per
//! row keeps the output agnostic to plotting tools.

use serde::{Deserialize, Serialize};

use crate::Result;

/// A single reported value: `metric` names the quantity, `subset` the slice
/// it was computed on (before/after, seen/unseen, a class id, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub subset: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(metric: impl Into<String>, subset: impl Into<String>, value: f64) -> Self {
        MetricRow {
            metric: metric.into(),
            subset: subset.into(),
            value,
        }
    }
}

/// A sweep value keyed by the sweep parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub subset: String,
    pub metric: String,
    pub value: f64,
}

pub fn metric_rows_to_csv(rows: &[MetricRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["metric", "subset", "value"])
        .map_err(csv_err)?;
    for row in rows {
        writer
            .write_record([&row.metric, &row.subset, &format!("{}", row.value)])
            .map_err(csv_err)?;
    }
    finish(writer)
}

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["n", "subset", "metric", "value"])
        .map_err(csv_err)?;
    for row in rows {
        writer
            .write_record([
                &row.n.to_string(),
                &row.subset,
                &row.metric,
                &format!("{}", row.value),
            ])
            .map_err(csv_err)?;
    }
    finish(writer)
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Structure(format!("csv write: {e}"))
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| crate::Error::Structure(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| crate::Error::Structure(format!("csv utf8: {e}")))
}
