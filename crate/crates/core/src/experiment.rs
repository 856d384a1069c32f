//! Repeated-simulation MSE sweeps over sample sizes.
//!
//! Every `(sample size, repetition)` cell simulates a fresh dataset from its
//! own derived seed, evaluates every requested estimator on every pair
//! `i < j` of that same dataset, and records the squared error against the
//! closed-form ATE. Cells share no state, so results are identical for any
//! worker count, and adding repetitions leaves existing ones untouched.

use serde::Serialize;
use thiserror::Error;

use crate::estimators::{DatasetSummary, EstimateError, EstimatorKind};
use crate::model::{SharingMdpConfig, VariantId};
use crate::oracle;
use crate::parallel;
use crate::simulator::{
    sample_dataset, AssignmentPolicy, MisspecificationKnob, SimulationError, SimulationSeed,
};

/// Normal quantile used for the two-sided 95% interval.
pub const Z_95: f64 = 1.96;

/// Logarithmic default grid of trajectory counts.
pub const DEFAULT_SAMPLE_SIZES: [usize; 7] = [100, 300, 1_000, 3_000, 10_000, 30_000, 100_000];

pub const DEFAULT_REPETITIONS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    InvalidPlan(String),
    #[error("simulation failed at n = {sample_size}, repetition {repetition}: {source}")]
    Simulation {
        sample_size: usize,
        repetition: u32,
        #[source]
        source: SimulationError,
    },
    #[error("estimation failed at n = {sample_size}, repetition {repetition}: {source}")]
    Estimation {
        sample_size: usize,
        repetition: u32,
        #[source]
        source: EstimateError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("a confidence interval needs at least 2 values, got {0}")]
pub struct TooFewValues(pub usize);

/// Mean with a normal-approximation 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ci95 {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// `mean ± 1.96·s/√R` with `s` the sample standard deviation. When every
/// value is non-negative (squared errors) the lower bound is clamped at 0.
pub fn ci95(values: &[f64]) -> Result<Ci95, TooFewValues> {
    if values.len() < 2 {
        return Err(TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let half_width = Z_95 * variance.sqrt() / n.sqrt();
    let mut low = mean - half_width;
    if values.iter().all(|&v| v >= 0.0) {
        low = low.max(0.0);
    }
    Ok(Ci95 {
        mean,
        low,
        high: mean + half_width,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub config: SharingMdpConfig,
    pub sample_sizes: Vec<usize>,
    pub repetitions: u32,
    pub base_seed: SimulationSeed,
    pub estimators: Vec<EstimatorKind>,
    /// Drift applied when simulating. Errors are always measured against the
    /// drift-free closed-form truth.
    pub knob: MisspecificationKnob,
}

impl SweepPlan {
    /// The default grid, 32 repetitions and all three estimators.
    pub fn with_defaults(config: SharingMdpConfig, base_seed: SimulationSeed) -> Self {
        Self {
            config,
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            base_seed,
            estimators: EstimatorKind::ALL.to_vec(),
            knob: MisspecificationKnob::none(),
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let invalid = |msg: String| Err(SweepError::InvalidPlan(msg));
        if self.sample_sizes.is_empty() {
            return invalid("no sample sizes".into());
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < 10) {
            return invalid(format!("sample size {n} is below the minimum of 10"));
        }
        if let Some(w) = self.sample_sizes.windows(2).find(|w| w[0] >= w[1]) {
            return invalid(format!(
                "sample sizes must be strictly increasing ({} then {})",
                w[0], w[1]
            ));
        }
        if self.repetitions < 2 {
            return invalid(format!(
                "need at least 2 repetitions for a confidence interval, got {}",
                self.repetitions
            ));
        }
        if self.estimators.is_empty() {
            return invalid("no estimators selected".into());
        }
        if !self.knob.depth_drift.is_finite() {
            return invalid("depth_drift must be finite".into());
        }
        Ok(())
    }

    /// Seed of one cell; depends only on the base seed, repetition and
    /// sample size.
    pub fn cell_seed(&self, repetition: u32, sample_size: usize) -> SimulationSeed {
        self.base_seed
            .derive(&[u64::from(repetition), sample_size as u64])
    }

    pub fn pairs(&self) -> Vec<(VariantId, VariantId)> {
        let n = self.config.num_variants();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (VariantId::from(i), VariantId::from(j))))
            .collect()
    }
}

/// One `(estimator, pair, sample size)` cell aggregated over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub sample_size: usize,
    /// Estimates of the successful repetitions, in repetition order.
    pub estimates: Vec<f64>,
    pub squared_errors: Vec<f64>,
    /// Repetitions whose estimate was degenerate.
    pub failed_repetitions: Vec<u32>,
    /// MSE with its 95% interval; absent with fewer than 2 successes.
    pub mse: Option<Ci95>,
}

impl CurvePoint {
    pub fn failure_count(&self) -> usize {
        self.failed_repetitions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub estimator: EstimatorKind,
    pub i: VariantId,
    pub j: VariantId,
    pub true_ate: f64,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn last(&self) -> &CurvePoint {
        self.points.last().expect("plans have at least one sample size")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub sample_sizes: Vec<usize>,
    pub repetitions: u32,
    /// Plan estimator order, then pairs in `(i, j)` lexicographic order.
    pub curves: Vec<Curve>,
}

impl SweepResult {
    pub fn curve(&self, estimator: EstimatorKind, i: VariantId, j: VariantId) -> Option<&Curve> {
        self.curves
            .iter()
            .find(|c| c.estimator == estimator && c.i == i && c.j == j)
    }
}

// Outcomes of one cell, indexed [estimator][pair].
type CellOutcomes = Vec<Vec<Result<f64, ()>>>;

fn run_cell(plan: &SweepPlan, pairs: &[(VariantId, VariantId)], sample_size: usize, repetition: u32) -> Result<CellOutcomes, SweepError> {
    let dataset = sample_dataset(
        &plan.config,
        AssignmentPolicy::Production,
        plan.knob,
        plan.cell_seed(repetition, sample_size),
        sample_size,
    )
    .map_err(|source| SweepError::Simulation {
        sample_size,
        repetition,
        source,
    })?;
    let summary = DatasetSummary::from_dataset(&dataset);
    let policy = dataset.policy();
    let gamma = summary
        .gamma_estimate(policy)
        .map_err(|source| SweepError::Estimation {
            sample_size,
            repetition,
            source,
        })?;
    plan.estimators
        .iter()
        .map(|&kind| {
            pairs
                .iter()
                .map(|&(i, j)| {
                    let estimate = match kind {
                        EstimatorKind::DiffInGeometrics => {
                            crate::estimators::diff_in_geometrics_ate(&gamma, i, j)
                        }
                        _ => summary.ate(policy, kind, i, j),
                    };
                    match estimate {
                        Ok(value) => Ok(Ok(value)),
                        Err(e) if e.is_degenerate() => Ok(Err(())),
                        Err(source) => Err(SweepError::Estimation {
                            sample_size,
                            repetition,
                            source,
                        }),
                    }
                })
                .collect()
        })
        .collect()
}

/// Runs the sweep on `workers` threads.
pub fn run_sweep(plan: &SweepPlan, workers: usize) -> Result<SweepResult, SweepError> {
    plan.validate()?;
    let pairs = plan.pairs();
    let reps = plan.repetitions as usize;
    let cells = parallel::with_workers(workers, || {
        parallel::map_indexed(plan.sample_sizes.len() * reps, |cell| {
            let sample_size = plan.sample_sizes[cell / reps];
            let repetition = (cell % reps) as u32;
            // One dataset per worker at a time bounds memory.
            parallel::run_sequential(|| run_cell(plan, &pairs, sample_size, repetition))
        })
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut curves = Vec::new();
    for (e, &estimator) in plan.estimators.iter().enumerate() {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let true_ate = oracle::true_ate(&plan.config, i, j);
            let points = plan
                .sample_sizes
                .iter()
                .enumerate()
                .map(|(s, &sample_size)| {
                    let mut estimates = Vec::with_capacity(reps);
                    let mut failed_repetitions = Vec::new();
                    for r in 0..reps {
                        match cells[s * reps + r][e][p] {
                            Ok(value) => estimates.push(value),
                            Err(()) => failed_repetitions.push(r as u32),
                        }
                    }
                    let squared_errors: Vec<f64> =
                        estimates.iter().map(|v| (v - true_ate).powi(2)).collect();
                    CurvePoint {
                        sample_size,
                        mse: ci95(&squared_errors).ok(),
                        estimates,
                        squared_errors,
                        failed_repetitions,
                    }
                })
                .collect();
            curves.push(Curve {
                estimator,
                i,
                j,
                true_ate,
                points,
            });
        }
    }
    Ok(SweepResult {
        sample_sizes: plan.sample_sizes.clone(),
        repetitions: plan.repetitions,
        curves,
    })
}
