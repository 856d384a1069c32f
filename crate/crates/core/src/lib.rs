//! Sharing-chain treatment-effect estimation.
//!
//! Users in a social network are assigned system variants by a randomised
//! production policy. A session may share content to a new user, who starts
//! the next session of the chain under an independently drawn variant. This
//! interference makes per-user A/B estimates biased. The crate provides:
//!
//! * the sharing-chain MDP vocabulary ([`model`]),
//! * a seeded, parallel trajectory sampler ([`simulator`]),
//! * the Naïve IPS, Differences-in-Qs and Differences-in-Geometrics
//!   estimators ([`estimators`]),
//! * closed-form ground truth and analytic bias asymptotes ([`oracle`]),
//! * the repeated-run MSE sweep harness ([`experiment`]),
//! * file formats for configs, session logs, sweep tables and plots ([`io`]).

pub mod estimators;
pub mod experiment;
pub mod io;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod simulator;

pub use estimators::{
    diff_in_geometrics_ate, diff_in_qs_ate, estimate_gamma, naive_ate, pairwise_ates,
    DatasetSummary, EstimateError, EstimatorKind, GammaEstimate,
};
pub use experiment::{ci95, run_sweep, Ci95, SweepError, SweepPlan, SweepResult};
pub use model::{
    flatten, validate_config, AteMatrix, ConfigError, Dataset, DatasetError, ProductionPolicy,
    SessionRecord, SharingMdpConfig, Trajectory, TrajectoryError, VariantId,
};
pub use simulator::{
    monte_carlo_value, sample_dataset, sample_trajectory, AssignmentPolicy, MisspecificationKnob,
    SimulationError, SimulationSeed,
};
