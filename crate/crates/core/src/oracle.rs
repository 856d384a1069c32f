//! Ground truth under the geometric-termination model.
//!
//! Constant policy `π_a` yields chains whose length is Geometric(1 − γ_a)
//! on `{1, 2, …}`, so `V(π_a) = Σ_k k γ_a^{k−1} (1 − γ_a) = 1/(1 − γ_a)`.
//!
//! The asymptotes of the Naïve and Differences-in-Qs estimators come from
//! the mixture chain under `π_p`: every session continues with probability
//! `γ̄ = Σ_a π_p(a) γ_a`, a chain holds `1/(1 − γ̄)` sessions on average, and
//! a session assigned `a` has expected realised tail `γ_a/(1 − γ̄)`. Hence
//!
//! * Naïve → `(γ_i − γ_j)/(1 − γ̄)`,
//! * Differences-in-Qs → `(γ_i − γ_j)/(1 − γ̄)²`,
//!
//! both biased relative to `1/(1 − γ_i) − 1/(1 − γ_j)` unless the effect is
//! null. These hold only for zero depth drift.

use thiserror::Error;

use crate::model::{AteMatrix, SharingMdpConfig, VariantId};

/// Default number of terms for [`truncated_series_value`].
pub const DEFAULT_SERIES_TERMS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OracleError {
    #[error("continuation probability {0} is outside [0, 1)")]
    Domain(f64),
    #[error("series needs at least one term")]
    NoTerms,
}

fn check_gamma(gamma: f64) -> Result<(), OracleError> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(OracleError::Domain(gamma))
    }
}

/// `V(π_a) = 1/(1 − γ_a)`, expected sessions per seed session.
pub fn true_value(gamma: f64) -> Result<f64, OracleError> {
    check_gamma(gamma)?;
    Ok(1.0 / (1.0 - gamma))
}

/// Partial sum `Σ_{k=1}^{k_max} k γ^{k−1} (1 − γ)` (the `k = 0` term is
/// zero).
///
/// The omitted tail is `(k_max + 1 − k_max·γ) γ^{k_max} / (1 − γ)`, see
/// [`series_tail_bound`].
pub fn truncated_series_value(gamma: f64, k_max: u64) -> Result<f64, OracleError> {
    check_gamma(gamma)?;
    if k_max == 0 {
        return Err(OracleError::NoTerms);
    }
    let mut sum = 0.0;
    let mut power = 1.0;
    for k in 1..=k_max {
        let term = k as f64 * power * (1.0 - gamma);
        sum += term;
        power *= gamma;
        if power == 0.0 {
            break;
        }
    }
    Ok(sum)
}

/// Exact size of the series tail beyond `k_max` terms.
pub fn series_tail_bound(gamma: f64, k_max: u64) -> Result<f64, OracleError> {
    check_gamma(gamma)?;
    let k = k_max as f64;
    Ok((k + 1.0 - k * gamma) * gamma.powf(k) / (1.0 - gamma))
}

pub fn true_ate(config: &SharingMdpConfig, i: VariantId, j: VariantId) -> f64 {
    // Validated configs keep every γ in [0, 1).
    1.0 / (1.0 - config.gamma(i)) - 1.0 / (1.0 - config.gamma(j))
}

pub fn true_ate_matrix(config: &SharingMdpConfig) -> AteMatrix {
    AteMatrix::from_upper_triangle::<std::convert::Infallible>(config.num_variants(), |i, j| {
        Ok(true_ate(config, i, j))
    })
    .expect("infallible")
}

/// `γ̄ = Σ_a π_p(a) γ_a`, the per-session share probability under `π_p`.
pub fn mixture_gamma(config: &SharingMdpConfig) -> f64 {
    config
        .policy()
        .probs()
        .iter()
        .zip(config.gammas())
        .map(|(p, g)| p * g)
        .sum()
}

/// Large-sample limit of the Naïve estimator.
pub fn naive_asymptote(config: &SharingMdpConfig, i: VariantId, j: VariantId) -> f64 {
    (config.gamma(i) - config.gamma(j)) / (1.0 - mixture_gamma(config))
}

/// Large-sample limit of the Differences-in-Qs estimator.
pub fn diff_in_qs_asymptote(config: &SharingMdpConfig, i: VariantId, j: VariantId) -> f64 {
    (config.gamma(i) - config.gamma(j)) / (1.0 - mixture_gamma(config)).powi(2)
}
