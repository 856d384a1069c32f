//! Treatment-effect estimators on a dataset logged under `π_p`.
//!
//! All three estimators reduce to per-variant integer tallies over the
//! dataset ([`DatasetSummary`]):
//!
//! * Naïve IPS: `(shares_i/π_i − shares_j/π_j) / N`, the average over the
//!   `N` trajectories of `Σ_t [1(a_t=i)/π_i − 1(a_t=j)/π_j]·r_t`;
//! * Differences-in-Qs: the same with `r_t` replaced by the realised tail
//!   `Σ_{t'≥t} r_{t'}` of the session's own chain;
//! * Differences-in-Geometrics: `1/(1−γ̂_i) − 1/(1−γ̂_j)` with
//!   `γ̂_i = (1/|𝒟|) Σ 1(a=i) r / π_i`, `|𝒟|` the flattened session count.
//!
//! Integer tallies make every estimate independent of summation order, and
//! exactly invariant to duplicating the dataset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AteMatrix, Dataset, ProductionPolicy, SessionRecord, VariantId};
use crate::parallel;

/// `γ̂` at or above `1 − DEGENERACY_EPSILON` has no finite geometric value.
pub const DEGENERACY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("dataset has no sessions")]
    EmptyDataset,
    #[error("pairwise effects need at least 2 variants, got {0}")]
    TooFewVariants(usize),
    #[error("treatment effect of {0} against itself is not an estimand")]
    SameVariant(VariantId),
    #[error("variant {variant} is not among the {num_variants} logged variants")]
    UnknownVariant { variant: VariantId, num_variants: usize },
    #[error("gamma estimate {gamma_hat} for {variant} is not below 1; geometric value diverges")]
    Degenerate { variant: VariantId, gamma_hat: f64 },
    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: VariantId,
        j: VariantId,
        #[source]
        source: Box<EstimateError>,
    },
}

impl EstimateError {
    /// Whether the root cause is a degenerate `γ̂`.
    pub fn is_degenerate(&self) -> bool {
        match self {
            EstimateError::Degenerate { .. } => true,
            EstimateError::Pair { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Naive,
    DiffInQs,
    DiffInGeometrics,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Naive,
        EstimatorKind::DiffInQs,
        EstimatorKind::DiffInGeometrics,
    ];

    /// Short machine name, also used in file names.
    pub fn key(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::DiffInQs => "diff-in-qs",
            EstimatorKind::DiffInGeometrics => "diff-in-geometrics",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "Naïve",
            EstimatorKind::DiffInQs => "Differences-in-Qs",
            EstimatorKind::DiffInGeometrics => "Differences-in-Geometrics",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| {
                format!("unknown estimator '{s}' (expected naive, diff-in-qs or diff-in-geometrics)")
            })
    }
}

/// Per-variant IPS estimates of the share probability, with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaEstimate {
    /// `γ̂_a`, non-negative, possibly above 1 in small samples.
    pub gammas: Vec<f64>,
    /// `Σ_𝒟 1(a=a_i)/π_p(a_i)`.
    pub ips_weight_sums: Vec<f64>,
    pub session_counts: Vec<u64>,
    pub share_counts: Vec<u64>,
    pub total_sessions: u64,
}

impl GammaEstimate {
    fn check_pair(&self, i: VariantId, j: VariantId) -> Result<(), EstimateError> {
        check_pair(self.gammas.len(), i, j)
    }

    /// `1/(1−γ̂_a)`, or a degenerate-estimate error.
    pub fn geometric_value(&self, variant: VariantId) -> Result<f64, EstimateError> {
        let gamma_hat = self.gammas[variant.index()];
        if gamma_hat >= 1.0 - DEGENERACY_EPSILON {
            return Err(EstimateError::Degenerate { variant, gamma_hat });
        }
        Ok(1.0 / (1.0 - gamma_hat))
    }
}

fn check_pair(num_variants: usize, i: VariantId, j: VariantId) -> Result<(), EstimateError> {
    for variant in [i, j] {
        if variant.index() >= num_variants {
            return Err(EstimateError::UnknownVariant {
                variant,
                num_variants,
            });
        }
    }
    if i == j {
        return Err(EstimateError::SameVariant(i));
    }
    Ok(())
}

/// Sufficient statistics of a dataset for every estimator in this module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSummary {
    pub num_trajectories: u64,
    pub num_sessions: u64,
    /// Sessions assigned each variant.
    pub sessions: Vec<u64>,
    /// Successful shares by sessions assigned each variant.
    pub shares: Vec<u64>,
    /// Sum of realised tail rewards `Σ_{t'≥t} r_{t'}` over sessions
    /// assigned each variant.
    pub tail_rewards: Vec<u64>,
}

impl DatasetSummary {
    pub fn new(num_variants: usize) -> Self {
        Self {
            num_trajectories: 0,
            num_sessions: 0,
            sessions: vec![0; num_variants],
            shares: vec![0; num_variants],
            tail_rewards: vec![0; num_variants],
        }
    }

    pub fn add_trajectory(&mut self, sessions: &[SessionRecord]) {
        self.num_trajectories += 1;
        self.num_sessions += sessions.len() as u64;
        let mut tail = 0u64;
        for s in sessions.iter().rev() {
            let a = s.variant.index();
            tail += u64::from(s.reward);
            self.sessions[a] += 1;
            self.shares[a] += u64::from(s.reward);
            self.tail_rewards[a] += tail;
        }
    }

    pub fn merge(&mut self, other: &DatasetSummary) {
        self.num_trajectories += other.num_trajectories;
        self.num_sessions += other.num_sessions;
        for (dst, src) in [
            (&mut self.sessions, &other.sessions),
            (&mut self.shares, &other.shares),
            (&mut self.tail_rewards, &other.tail_rewards),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn from_dataset(dataset: &Dataset) -> Self {
        const CHUNK: usize = 16_384;
        let num_variants = dataset.policy().num_variants();
        let n = dataset.num_trajectories();
        let parts = parallel::map_indexed(n.div_ceil(CHUNK), |chunk| {
            let mut part = DatasetSummary::new(num_variants);
            for k in chunk * CHUNK..((chunk + 1) * CHUNK).min(n) {
                part.add_trajectory(dataset.trajectory(k));
            }
            part
        });
        let mut summary = DatasetSummary::new(num_variants);
        for part in &parts {
            summary.merge(part);
        }
        summary
    }

    pub fn num_variants(&self) -> usize {
        self.sessions.len()
    }

    fn check_nonempty(&self) -> Result<(), EstimateError> {
        if self.num_sessions == 0 {
            Err(EstimateError::EmptyDataset)
        } else {
            Ok(())
        }
    }

    pub fn gamma_estimate(&self, policy: &ProductionPolicy) -> Result<GammaEstimate, EstimateError> {
        self.check_nonempty()?;
        let total = self.num_sessions as f64;
        let probs = policy.probs();
        Ok(GammaEstimate {
            gammas: self
                .shares
                .iter()
                .zip(probs)
                .map(|(&shares, &p)| (shares as f64 / p) / total)
                .collect(),
            ips_weight_sums: self
                .sessions
                .iter()
                .zip(probs)
                .map(|(&sessions, &p)| sessions as f64 / p)
                .collect(),
            session_counts: self.sessions.clone(),
            share_counts: self.shares.clone(),
            total_sessions: self.num_sessions,
        })
    }

    fn ips_difference(
        &self,
        tallies: &[u64],
        policy: &ProductionPolicy,
        i: VariantId,
        j: VariantId,
    ) -> Result<f64, EstimateError> {
        self.check_nonempty()?;
        check_pair(self.num_variants(), i, j)?;
        let weighted = |v: VariantId| tallies[v.index()] as f64 / policy.prob(v);
        Ok((weighted(i) - weighted(j)) / self.num_trajectories as f64)
    }

    pub fn naive(&self, policy: &ProductionPolicy, i: VariantId, j: VariantId) -> Result<f64, EstimateError> {
        self.ips_difference(&self.shares, policy, i, j)
    }

    pub fn diff_in_qs(&self, policy: &ProductionPolicy, i: VariantId, j: VariantId) -> Result<f64, EstimateError> {
        self.ips_difference(&self.tail_rewards, policy, i, j)
    }

    pub fn ate(
        &self,
        policy: &ProductionPolicy,
        kind: EstimatorKind,
        i: VariantId,
        j: VariantId,
    ) -> Result<f64, EstimateError> {
        match kind {
            EstimatorKind::Naive => self.naive(policy, i, j),
            EstimatorKind::DiffInQs => self.diff_in_qs(policy, i, j),
            EstimatorKind::DiffInGeometrics => {
                diff_in_geometrics_ate(&self.gamma_estimate(policy)?, i, j)
            }
        }
    }

    pub fn pairwise(&self, policy: &ProductionPolicy, kind: EstimatorKind) -> Result<AteMatrix, EstimateError> {
        self.check_nonempty()?;
        // Computed once so every pair sees the same γ̂.
        let gamma = match kind {
            EstimatorKind::DiffInGeometrics => Some(self.gamma_estimate(policy)?),
            _ => None,
        };
        AteMatrix::from_upper_triangle(self.num_variants(), |i, j| {
            match &gamma {
                Some(gamma) => diff_in_geometrics_ate(gamma, i, j),
                None => self.ate(policy, kind, i, j),
            }
            .map_err(|source| EstimateError::Pair {
                i,
                j,
                source: Box::new(source),
            })
        })
    }
}

pub fn estimate_gamma(dataset: &Dataset) -> Result<GammaEstimate, EstimateError> {
    DatasetSummary::from_dataset(dataset).gamma_estimate(dataset.policy())
}

pub fn naive_ate(dataset: &Dataset, i: VariantId, j: VariantId) -> Result<f64, EstimateError> {
    DatasetSummary::from_dataset(dataset).naive(dataset.policy(), i, j)
}

pub fn diff_in_qs_ate(dataset: &Dataset, i: VariantId, j: VariantId) -> Result<f64, EstimateError> {
    DatasetSummary::from_dataset(dataset).diff_in_qs(dataset.policy(), i, j)
}

pub fn diff_in_geometrics_ate(
    gamma: &GammaEstimate,
    i: VariantId,
    j: VariantId,
) -> Result<f64, EstimateError> {
    gamma.check_pair(i, j)?;
    Ok(gamma.geometric_value(i)? - gamma.geometric_value(j)?)
}

pub fn pairwise_ates(dataset: &Dataset, kind: EstimatorKind) -> Result<AteMatrix, EstimateError> {
    if dataset.policy().num_variants() < 2 {
        return Err(EstimateError::TooFewVariants(dataset.policy().num_variants()));
    }
    DatasetSummary::from_dataset(dataset).pairwise(dataset.policy(), kind)
}
