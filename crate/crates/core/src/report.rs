//! Report files: structured JSON plus companion CSVs for scatter and box
//! data. Every float is serialized with 12 significant digits so repeated
//! runs produce byte-identical output.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::pipeline::{CriticalReport, OverlapReport, PlotData};

/// Round to 12 significant digits (shortest display form afterwards).
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Display a float rounded to 12 significant digits.
pub fn fmt_f64(x: f64) -> String {
    let r = round_sig12(x);
    if r.is_finite() {
        format!("{r}")
    } else {
        "null".to_string()
    }
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) => {
            // Integers pass through untouched; only true floats are rounded.
            if n.is_f64() {
                if let Some(f) = n.as_f64() {
                    if let Some(rounded) = serde_json::Number::from_f64(round_sig12(f)) {
                        *n = rounded;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serialize any report structure to deterministic pretty JSON (sorted
/// keys, floats at 12 significant digits).
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    round_floats(&mut v);
    serde_json::to_string_pretty(&v)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_report_json(report: &CriticalReport, path: &Path) -> Result<()> {
    write_file(path, &(to_json_string(report)? + "\n"))
}

pub fn write_overlap_json(overlap: &OverlapReport, path: &Path) -> Result<()> {
    write_file(path, &(to_json_string(overlap)? + "\n"))
}

/// `scatter.csv`: one row per (critical neighborhood, metric).
pub fn write_scatter_csv(plot: &PlotData, path: &Path) -> Result<()> {
    let mut out = String::from("neighborhood_id,metric,value_n,value_dprime\n");
    for row in &plot.scatter {
        let _ = writeln!(
            out,
            "{:016x},{},{},{}",
            row.neighborhood_id,
            row.metric,
            fmt_f64(row.value_n),
            fmt_f64(row.value_dprime)
        );
    }
    write_file(path, &out)
}

/// `box.csv`: one row per series; outliers are `;`-joined in the last field.
pub fn write_box_csv(plot: &PlotData, path: &Path) -> Result<()> {
    let mut out =
        String::from("series,n,q1,median,q3,iqr,whisker_low,whisker_high,n_outliers,outliers\n");
    for b in &plot.boxes {
        let outliers = b
            .outliers
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            b.series,
            b.n,
            fmt_f64(b.q1),
            fmt_f64(b.median),
            fmt_f64(b.q3),
            fmt_f64(b.iqr),
            fmt_f64(b.whisker_low),
            fmt_f64(b.whisker_high),
            b.outliers.len(),
            outliers
        );
    }
    write_file(path, &out)
}
