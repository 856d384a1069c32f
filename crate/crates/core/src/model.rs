//! Domain types for the sharing-chain MDP: variants, the production
//! policy, continuation probabilities, logged sessions and ATE matrices.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ π_p(a) = 1`.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Default safety cap on chain length.
pub const DEFAULT_MAX_CHAIN_LENGTH: u32 = 1_000_000;

/// Dense index of a system variant (an action of the MDP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariantId(pub u32);

impl VariantId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VariantId {
    fn from(index: usize) -> Self {
        VariantId(index as u32)
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("policy has no variants")]
    EmptyPolicy,
    #[error("need at least 2 variants, got {0}")]
    TooFewVariants(usize),
    #[error("policy lists {probs} variants but {gammas} continuation probabilities were given")]
    LengthMismatch { probs: usize, gammas: usize },
    #[error("variant {variant} has probability {prob}; every variant needs probability > 0")]
    NonPositiveProbability { variant: usize, prob: f64 },
    #[error("policy probabilities sum to {sum}, expected 1")]
    ProbabilitySum { sum: f64 },
    #[error("variant {variant} has continuation probability {gamma}; must lie in [0, 1)")]
    GammaOutOfRange { variant: usize, gamma: f64 },
    #[error("max_chain_length must be at least 1")]
    ZeroChainCap,
}

/// The randomised assignment `π_p` of variants to sessions.
///
/// Every probability is strictly positive so that IPS weights stay finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProductionPolicy {
    probs: Vec<f64>,
}

impl ProductionPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self, ConfigError> {
        if probs.is_empty() {
            return Err(ConfigError::EmptyPolicy);
        }
        for (variant, &prob) in probs.iter().enumerate() {
            if !(prob > 0.0 && prob.is_finite()) {
                return Err(ConfigError::NonPositiveProbability { variant, prob });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(ConfigError::ProbabilitySum { sum });
        }
        Ok(Self { probs })
    }

    /// Uniform assignment over `n` variants.
    pub fn uniform(n: usize) -> Result<Self, ConfigError> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, variant: VariantId) -> f64 {
        self.probs[variant.index()]
    }

    pub fn num_variants(&self) -> usize {
        self.probs.len()
    }
}

impl TryFrom<Vec<f64>> for ProductionPolicy {
    type Error = ConfigError;

    fn try_from(probs: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(probs)
    }
}

impl From<ProductionPolicy> for Vec<f64> {
    fn from(policy: ProductionPolicy) -> Self {
        policy.probs
    }
}

/// Ground truth of the sharing-chain MDP: the production policy, the
/// per-variant continuation probabilities `γ_a`, and a chain-length cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharingMdpConfig {
    policy: ProductionPolicy,
    gammas: Vec<f64>,
    max_chain_length: u32,
}

impl SharingMdpConfig {
    pub fn new(
        policy: ProductionPolicy,
        gammas: Vec<f64>,
        max_chain_length: u32,
    ) -> Result<Self, ConfigError> {
        validate_config(Self {
            policy,
            gammas,
            max_chain_length,
        })
    }

    /// The three-variant setup with `π_p = [0.5, 0.25, 0.25]` and
    /// `γ = [0.1, 0.2, 0.3]`.
    pub fn three_variant_reference() -> Self {
        Self::new(
            ProductionPolicy::new(vec![0.5, 0.25, 0.25]).expect("valid policy"),
            vec![0.1, 0.2, 0.3],
            DEFAULT_MAX_CHAIN_LENGTH,
        )
        .expect("valid config")
    }

    pub fn policy(&self) -> &ProductionPolicy {
        &self.policy
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn gamma(&self, variant: VariantId) -> f64 {
        self.gammas[variant.index()]
    }

    pub fn max_chain_length(&self) -> u32 {
        self.max_chain_length
    }

    pub fn num_variants(&self) -> usize {
        self.gammas.len()
    }

    pub fn variants(&self) -> impl Iterator<Item = VariantId> {
        (0..self.num_variants()).map(VariantId::from)
    }
}

/// Checks every config invariant and returns the config unchanged, or the
/// first violation found.
pub fn validate_config(config: SharingMdpConfig) -> Result<SharingMdpConfig, ConfigError> {
    let probs = config.policy.probs();
    if probs.len() != config.gammas.len() {
        return Err(ConfigError::LengthMismatch {
            probs: probs.len(),
            gammas: config.gammas.len(),
        });
    }
    if probs.len() < 2 {
        return Err(ConfigError::TooFewVariants(probs.len()));
    }
    ProductionPolicy::new(probs.to_vec())?;
    for (variant, &gamma) in config.gammas.iter().enumerate() {
        if !(0.0..1.0).contains(&gamma) {
            return Err(ConfigError::GammaOutOfRange { variant, gamma });
        }
    }
    if config.max_chain_length == 0 {
        return Err(ConfigError::ZeroChainCap);
    }
    Ok(config)
}

/// One logged session.
///
/// `reward` is 1 iff the session produced a successful share, i.e. the
/// chain continues past it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionRecord {
    pub trajectory_id: u64,
    pub position: u32,
    pub variant: VariantId,
    pub reward: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("trajectory is empty")]
    Empty,
    #[error("session {index} belongs to trajectory {found}, expected {expected}")]
    MixedIds { index: usize, expected: u64, found: u64 },
    #[error("session {index} has position {found}, expected {expected}")]
    BadPosition { index: usize, expected: u32, found: u32 },
    #[error("session {index} has reward {reward}; rewards must be 0 or 1")]
    BadReward { index: usize, reward: u8 },
    #[error("session {index} has reward 0 but is not the last session of its chain")]
    EarlyTermination { index: usize },
    #[error("final session {index} has reward 1; a chain ends with a failed share")]
    OpenEnded { index: usize },
}

/// Checks the sharing-chain invariant on a run of sessions.
pub fn check_trajectory(sessions: &[SessionRecord]) -> Result<(), TrajectoryError> {
    let first = sessions.first().ok_or(TrajectoryError::Empty)?;
    let last = sessions.len() - 1;
    for (index, s) in sessions.iter().enumerate() {
        if s.trajectory_id != first.trajectory_id {
            return Err(TrajectoryError::MixedIds {
                index,
                expected: first.trajectory_id,
                found: s.trajectory_id,
            });
        }
        if s.position as usize != index {
            return Err(TrajectoryError::BadPosition {
                index,
                expected: index as u32,
                found: s.position,
            });
        }
        match (s.reward, index == last) {
            (0, true) | (1, false) => {}
            (1, true) => return Err(TrajectoryError::OpenEnded { index }),
            (0, false) => return Err(TrajectoryError::EarlyTermination { index }),
            (reward, _) => return Err(TrajectoryError::BadReward { index, reward }),
        }
    }
    Ok(())
}

/// A single sharing chain: rewards are 1 for every session except the
/// last, whose reward is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    sessions: Vec<SessionRecord>,
}

impl Trajectory {
    pub fn new(sessions: Vec<SessionRecord>) -> Result<Self, TrajectoryError> {
        check_trajectory(&sessions)?;
        Ok(Self { sessions })
    }

    /// Builds a chain with the given id from the variants assigned along
    /// it.
    pub fn from_variants(trajectory_id: u64, variants: &[VariantId]) -> Result<Self, TrajectoryError> {
        let last = variants.len().saturating_sub(1);
        let sessions = variants
            .iter()
            .enumerate()
            .map(|(t, &variant)| SessionRecord {
                trajectory_id,
                position: t as u32,
                variant,
                reward: u8::from(t != last),
            })
            .collect();
        Self::new(sessions)
    }

    pub(crate) fn from_valid(sessions: Vec<SessionRecord>) -> Self {
        debug_assert_eq!(check_trajectory(&sessions), Ok(()));
        Self { sessions }
    }

    pub fn id(&self) -> u64 {
        self.sessions[0].trajectory_id
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    pub fn into_sessions(self) -> Vec<SessionRecord> {
        self.sessions
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("trajectory {trajectory}: {source}")]
    Trajectory {
        trajectory: usize,
        #[source]
        source: TrajectoryError,
    },
    #[error("session {index} uses variant {variant} but the policy has {num_variants} variants")]
    UnknownVariant {
        index: usize,
        variant: u32,
        num_variants: usize,
    },
}

/// Sessions logged under a production policy, grouped into trajectories.
///
/// Sessions are stored flat in trajectory order then position order; the
/// flattened session count is `|𝒟|` of the gamma estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sessions: Vec<SessionRecord>,
    // starts[k]..starts[k + 1] is trajectory k; always starts with 0.
    starts: Vec<usize>,
    policy: ProductionPolicy,
}

impl Dataset {
    pub fn empty(policy: ProductionPolicy) -> Self {
        Self {
            sessions: Vec::new(),
            starts: vec![0],
            policy,
        }
    }

    pub fn from_trajectories(
        policy: ProductionPolicy,
        trajectories: impl IntoIterator<Item = Trajectory>,
    ) -> Result<Self, DatasetError> {
        let mut dataset = Self::empty(policy);
        for trajectory in trajectories {
            dataset.sessions.extend(trajectory.into_sessions());
            dataset.starts.push(dataset.sessions.len());
        }
        dataset.check_variants()?;
        Ok(dataset)
    }

    /// Groups a flat session list into trajectories. A new trajectory
    /// begins whenever the id changes or a position-0 session appears.
    pub fn from_records(
        policy: ProductionPolicy,
        sessions: Vec<SessionRecord>,
    ) -> Result<Self, DatasetError> {
        let mut starts = vec![0];
        for k in 1..sessions.len() {
            if sessions[k].trajectory_id != sessions[k - 1].trajectory_id || sessions[k].position == 0 {
                starts.push(k);
            }
        }
        if !sessions.is_empty() {
            starts.push(sessions.len());
        }
        let dataset = Self {
            sessions,
            starts,
            policy,
        };
        for (trajectory, run) in dataset.trajectories().enumerate() {
            check_trajectory(run).map_err(|source| DatasetError::Trajectory { trajectory, source })?;
        }
        dataset.check_variants()?;
        Ok(dataset)
    }

    /// Assembles a dataset from already-validated flat sessions and
    /// per-trajectory lengths.
    pub(crate) fn from_valid_parts(
        policy: ProductionPolicy,
        sessions: Vec<SessionRecord>,
        lengths: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut starts = vec![0];
        let mut end = 0;
        for len in lengths {
            end += len;
            starts.push(end);
        }
        debug_assert_eq!(end, sessions.len());
        let dataset = Self {
            sessions,
            starts,
            policy,
        };
        debug_assert!(dataset.trajectories().all(|t| check_trajectory(t).is_ok()));
        debug_assert!(dataset.check_variants().is_ok());
        dataset
    }

    fn check_variants(&self) -> Result<(), DatasetError> {
        let num_variants = self.policy.num_variants();
        match self
            .sessions
            .iter()
            .position(|s| s.variant.index() >= num_variants)
        {
            Some(index) => Err(DatasetError::UnknownVariant {
                index,
                variant: self.sessions[index].variant.0,
                num_variants,
            }),
            None => Ok(()),
        }
    }

    pub fn policy(&self) -> &ProductionPolicy {
        &self.policy
    }

    pub fn num_trajectories(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn num_sessions(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    pub fn trajectory(&self, k: usize) -> &[SessionRecord] {
        &self.sessions[self.starts[k]..self.starts[k + 1]]
    }

    pub fn trajectories(&self) -> impl ExactSizeIterator<Item = &[SessionRecord]> + '_ {
        self.starts
            .windows(2)
            .map(move |w| &self.sessions[w[0]..w[1]])
    }

    pub fn trajectory_lengths(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.starts.windows(2).map(|w| w[1] - w[0])
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }
}

/// All sessions in trajectory order, then position order.
pub fn flatten(dataset: &Dataset) -> &[SessionRecord] {
    dataset.sessions()
}

/// Pairwise treatment effects `V(π_{a_i}) − V(π_{a_j})` over ordered
/// variant pairs.
///
/// Only the upper triangle is ever computed; the lower triangle is its
/// exact negation and the diagonal is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AteMatrix {
    n: usize,
    values: Vec<f64>,
}

impl AteMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    pub fn from_upper_triangle<E>(
        n: usize,
        mut entry: impl FnMut(VariantId, VariantId) -> Result<f64, E>,
    ) -> Result<Self, E> {
        let mut matrix = Self::zeros(n);
        for i in 0..n {
            for j in i + 1..n {
                let value = entry(VariantId::from(i), VariantId::from(j))?;
                matrix.values[i * n + j] = value;
                matrix.values[j * n + i] = -value;
            }
        }
        Ok(matrix)
    }

    pub fn num_variants(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: VariantId, j: VariantId) -> f64 {
        self.values[i.index() * self.n + j.index()]
    }

    /// `(i, j, value)` for every `i < j`.
    pub fn upper_pairs(&self) -> impl Iterator<Item = (VariantId, VariantId, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (i + 1..self.n).map(move |j| {
                (
                    VariantId::from(i),
                    VariantId::from(j),
                    self.values[i * self.n + j],
                )
            })
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n.max(1))
    }
}
