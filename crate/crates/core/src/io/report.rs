//! Tabular ATE report produced from a logged dataset.
//!
//! ```text
//! # sharing-effects ate-report v1
//! # manifest: {...}
//! # warning: ...
//! record,estimator,variant_i,variant_j,value,sessions,shares,ips_weight_sum,status
//! gamma,,a1,,0.1012,60512,6123,121024,ok
//! geometric-value,,a1,,1.1126,,,,ok
//! ate,naive,a1,a2,-0.1207,,,,ok
//! ```
//!
//! `ate` rows cover every ordered pair `i ≠ j`. Values use the shortest
//! decimal form that parses back to the identical `f64`.

use std::fmt::Write as _;

use super::{fmt_opt, FormatError, RunManifest, FORMAT_VERSION};
use crate::estimators::{diff_in_geometrics_ate, DatasetSummary, EstimateError, EstimatorKind};
use crate::model::{Dataset, VariantId};

pub const HEADER: &str = "record,estimator,variant_i,variant_j,value,sessions,shares,ips_weight_sum,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Degenerate,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `gamma`, `geometric-value` or `ate`.
    pub record: String,
    pub estimator: Option<EstimatorKind>,
    pub variant_i: String,
    pub variant_j: Option<String>,
    pub value: Option<f64>,
    pub sessions: Option<u64>,
    pub shares: Option<u64>,
    pub ips_weight_sum: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AteReport {
    pub rows: Vec<ReportRow>,
    pub warnings: Vec<String>,
}

impl AteReport {
    /// Evaluates `estimators` on every ordered pair. `names[a]` labels
    /// variant `a`.
    pub fn compute(dataset: &Dataset, estimators: &[EstimatorKind], names: &[String]) -> Result<Self, EstimateError> {
        let policy = dataset.policy();
        let summary = DatasetSummary::from_dataset(dataset);
        let gamma = summary.gamma_estimate(policy)?;
        let n = policy.num_variants();
        let name = |v: usize| names.get(v).cloned().unwrap_or_else(|| VariantId::from(v).to_string());
        let mut rows = Vec::new();
        let mut warnings = Vec::new();

        for a in 0..n {
            if gamma.session_counts[a] == 0 {
                warnings.push(format!(
                    "variant {} has no sessions in the log; its gamma estimate is 0",
                    name(a)
                ));
            }
            let geometric = gamma.geometric_value(VariantId::from(a));
            if geometric.is_err() {
                warnings.push(format!(
                    "gamma estimate {} for variant {} is not below 1; geometric estimates involving it are degenerate",
                    gamma.gammas[a],
                    name(a)
                ));
            }
            rows.push(ReportRow {
                record: "gamma".into(),
                estimator: None,
                variant_i: name(a),
                variant_j: None,
                value: Some(gamma.gammas[a]),
                sessions: Some(gamma.session_counts[a]),
                shares: Some(gamma.share_counts[a]),
                ips_weight_sum: Some(gamma.ips_weight_sums[a]),
                status: RowStatus::Ok,
            });
            rows.push(ReportRow {
                record: "geometric-value".into(),
                estimator: None,
                variant_i: name(a),
                variant_j: None,
                value: geometric.as_ref().ok().copied(),
                sessions: None,
                shares: None,
                ips_weight_sum: None,
                status: if geometric.is_ok() { RowStatus::Ok } else { RowStatus::Degenerate },
            });
        }

        for &kind in estimators {
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let (vi, vj) = (VariantId::from(i), VariantId::from(j));
                    let estimate = match kind {
                        EstimatorKind::DiffInGeometrics => diff_in_geometrics_ate(&gamma, vi, vj),
                        _ => summary.ate(policy, kind, vi, vj),
                    };
                    let (value, status) = match estimate {
                        Ok(v) => (Some(v), RowStatus::Ok),
                        Err(e) if e.is_degenerate() => (None, RowStatus::Degenerate),
                        Err(e) => return Err(e),
                    };
                    rows.push(ReportRow {
                        record: "ate".into(),
                        estimator: Some(kind),
                        variant_i: name(i),
                        variant_j: Some(name(j)),
                        value,
                        sessions: None,
                        shares: None,
                        ips_weight_sum: None,
                        status,
                    });
                }
            }
        }
        Ok(Self { rows, warnings })
    }

    pub fn ate_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.record == "ate")
    }

    pub fn all_ates_degenerate(&self) -> bool {
        let mut rows = self.ate_rows().peekable();
        rows.peek().is_some() && rows.all(|r| r.status == RowStatus::Degenerate)
    }

    pub fn render(&self, manifest: Option<&RunManifest>) -> String {
        let mut out = format!("# sharing-effects ate-report v{FORMAT_VERSION}\n");
        if let Some(m) = manifest {
            out.push_str(&m.comment_line());
        }
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.record,
                r.estimator.map(EstimatorKind::key).unwrap_or_default(),
                r.variant_i,
                r.variant_j.as_deref().unwrap_or_default(),
                fmt_opt(r.value),
                r.sessions.map(|v| v.to_string()).unwrap_or_default(),
                r.shares.map(|v| v.to_string()).unwrap_or_default(),
                fmt_opt(r.ips_weight_sum),
                r.status.as_str()
            );
        }
        out
    }

    /// Reads the rows of a rendered report; warnings are not recovered.
    pub fn parse(text: &str) -> Result<Vec<ReportRow>, FormatError> {
        let mut rows = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line_no = k + 1;
            if line.starts_with('#') || line.trim().is_empty() || line == HEADER {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(FormatError::parse(line_no, format!("expected 9 fields, got {}", f.len())));
            }
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
            let num = |s: &str| -> Result<Option<f64>, FormatError> {
                opt(s)
                    .map(|v| v.parse::<f64>().map_err(|_| FormatError::parse(line_no, format!("bad number '{v}'"))))
                    .transpose()
            };
            let int = |s: &str| -> Result<Option<u64>, FormatError> {
                opt(s)
                    .map(|v| v.parse::<u64>().map_err(|_| FormatError::parse(line_no, format!("bad count '{v}'"))))
                    .transpose()
            };
            rows.push(ReportRow {
                record: f[0].to_string(),
                estimator: opt(f[1])
                    .map(|e| e.parse().map_err(|msg: String| FormatError::parse(line_no, msg)))
                    .transpose()?,
                variant_i: f[2].to_string(),
                variant_j: opt(f[3]),
                value: num(f[4])?,
                sessions: int(f[5])?,
                shares: int(f[6])?,
                ips_weight_sum: num(f[7])?,
                status: match f[8] {
                    "ok" => RowStatus::Ok,
                    "degenerate" => RowStatus::Degenerate,
                    other => return Err(FormatError::parse(line_no, format!("bad status '{other}'"))),
                },
            });
        }
        Ok(rows)
    }
}
