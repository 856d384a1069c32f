//! Comma-separated sweep outputs: one table per estimator and pair, and a
//! combined long-format file for plotting.

use std::fmt::Write as _;

use super::{fmt_opt, FormatError};
use crate::estimators::EstimatorKind;
use crate::experiment::{Curve, SweepResult};

pub const CURVE_HEADER: &str = "sample_size,mse,ci_low,ci_high,failures";
pub const PLOT_HEADER: &str = "estimator,variant_i,variant_j,sample_size,mse,ci_low,ci_high,successes,failures";
pub const PLOT_DATA_FILE: &str = "plot_data.csv";

/// Replaces every character outside `[A-Za-z0-9_-]` with `_`.
pub fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn name_of(names: &[String], index: usize) -> String {
    names.get(index).cloned().unwrap_or_else(|| format!("a{}", index + 1))
}

pub fn curve_file_name(curve: &Curve, names: &[String]) -> String {
    format!(
        "{}__{}_vs_{}.csv",
        curve.estimator.key(),
        file_safe(&name_of(names, curve.i.index())),
        file_safe(&name_of(names, curve.j.index()))
    )
}

pub fn curve_table(curve: &Curve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.sample_size,
            fmt_opt(p.mse.map(|c| c.mean)),
            fmt_opt(p.mse.map(|c| c.low)),
            fmt_opt(p.mse.map(|c| c.high)),
            p.failure_count()
        );
    }
    out
}

pub fn plot_data_table(result: &SweepResult, names: &[String]) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for curve in &result.curves {
        for p in &curve.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                curve.estimator.key(),
                name_of(names, curve.i.index()),
                name_of(names, curve.j.index()),
                p.sample_size,
                fmt_opt(p.mse.map(|c| c.mean)),
                fmt_opt(p.mse.map(|c| c.low)),
                fmt_opt(p.mse.map(|c| c.high)),
                p.squared_errors.len(),
                p.failure_count()
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub estimator: EstimatorKind,
    pub variant_i: String,
    pub variant_j: String,
    pub sample_size: usize,
    pub mse: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

pub fn parse_plot_data(text: &str) -> Result<Vec<PlotRow>, FormatError> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if line.trim().is_empty() || line.starts_with('#') || line == PLOT_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(FormatError::parse(line_no, format!("expected 9 fields, got {}", f.len())));
        }
        let bad = |what: &str, v: &str| FormatError::parse(line_no, format!("bad {what} '{v}'"));
        let float = |v: &str| -> Result<Option<f64>, FormatError> {
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad("number", v))
            }
        };
        let count = |v: &str| v.parse::<usize>().map_err(|_| bad("count", v));
        rows.push(PlotRow {
            estimator: f[0].parse().map_err(|msg: String| FormatError::parse(line_no, msg))?,
            variant_i: f[1].to_string(),
            variant_j: f[2].to_string(),
            sample_size: count(f[3])?,
            mse: float(f[4])?,
            ci_low: float(f[5])?,
            ci_high: float(f[6])?,
            successes: count(f[7])?,
            failures: count(f[8])?,
        });
    }
    Ok(rows)
}
