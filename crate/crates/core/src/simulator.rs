//! Seeded sampling of sharing chains.
//!
//! Each session draws its variant from the assignment policy, then shares
//! (continuing the chain) with probability `γ` of that variant. Randomness
//! is fully determined by `(seed, stream_id, trajectory_id)`:
//!
//! * `(seed, stream_id)` is expanded with SplitMix64 into a 256-bit ChaCha8
//!   key;
//! * the trajectory id selects the ChaCha8 stream, so every trajectory owns
//!   an independent substream starting at word 0;
//! * per session the sampler consumes one `f64` for the variant (production
//!   policy only) followed by one `f64` for the share decision.
//!
//! Trajectories are therefore the same whether sampled one at a time, in a
//! dataset, serially or on any number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Dataset, SessionRecord, SharingMdpConfig, Trajectory, VariantId};
use crate::parallel;

/// Upper clamp for a drifted continuation probability. A chain that drifts
/// up to the clamp then runs for about 1 / (1 - MAX_EFFECTIVE_GAMMA) more
/// sessions, so the clamp keeps positive drift well inside the default cap.
pub const MAX_EFFECTIVE_GAMMA: f64 = 1.0 - 1e-3;

/// Trajectories sampled per unit of parallel work. Fixed so output never
/// depends on the worker count.
const CHUNK_TRAJECTORIES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimulationError {
    #[error("trajectory {trajectory_id} reached the chain cap of {cap} sessions without ending")]
    CapExceeded { trajectory_id: u64, cap: u32 },
    #[error("constant policy names variant {variant} but the config has {num_variants} variants")]
    UnknownVariant { variant: u32, num_variants: usize },
    #[error("at least one trajectory must be sampled")]
    NoTrajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SimulationSeed {
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl SimulationSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    /// A child seed for a labelled sub-experiment. Depends only on this seed
    /// and the labels.
    pub fn derive(self, labels: &[u64]) -> Self {
        let mut state = splitmix64(self.stream_id ^ 0x5eed_5eed_5eed_5eed);
        for &label in labels {
            state = splitmix64(state ^ splitmix64(label));
        }
        Self {
            seed: self.seed,
            stream_id: state,
        }
    }

    fn key(self) -> [u8; 32] {
        let mut state = self.seed ^ splitmix64(self.stream_id).rotate_left(17);
        let mut key = [0u8; 32];
        for word in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            word.copy_from_slice(&mix(state).to_le_bytes());
        }
        key
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn splitmix64(x: u64) -> u64 {
    mix(x.wrapping_add(0x9e37_79b9_7f4a_7c15))
}

/// Depth-dependent perturbation of the continuation probability,
/// `γ_eff(a, t) = clamp(γ_a + δ·t, 0, 1 − 1e-9)`. Zero drift leaves every
/// `γ_a` untouched.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MisspecificationKnob {
    pub depth_drift: f64,
}

impl MisspecificationKnob {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn drift(depth_drift: f64) -> Self {
        Self { depth_drift }
    }

    pub fn effective_gamma(&self, gamma: f64, position: u32) -> f64 {
        if self.depth_drift == 0.0 {
            gamma
        } else {
            (gamma + self.depth_drift * f64::from(position)).clamp(0.0, MAX_EFFECTIVE_GAMMA)
        }
    }
}

/// Which variant each session receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentPolicy {
    /// Independent draws from `π_p` for every session.
    Production,
    /// The same variant for every session.
    Constant(VariantId),
}

/// Reusable state for sampling many trajectories from one stream.
#[derive(Debug, Clone)]
pub struct ChainSampler<'a> {
    config: &'a SharingMdpConfig,
    policy: AssignmentPolicy,
    knob: MisspecificationKnob,
    cdf: Vec<f64>,
    base: ChaCha8Rng,
}

impl<'a> ChainSampler<'a> {
    pub fn new(
        config: &'a SharingMdpConfig,
        policy: AssignmentPolicy,
        knob: MisspecificationKnob,
        seed: SimulationSeed,
    ) -> Result<Self, SimulationError> {
        if let AssignmentPolicy::Constant(variant) = policy {
            if variant.index() >= config.num_variants() {
                return Err(SimulationError::UnknownVariant {
                    variant: variant.0,
                    num_variants: config.num_variants(),
                });
            }
        }
        let cdf = config
            .policy()
            .probs()
            .iter()
            .scan(0.0, |acc, &p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            config,
            policy,
            knob,
            cdf,
            base: ChaCha8Rng::from_seed(seed.key()),
        })
    }

    fn draw_variant(&self, rng: &mut ChaCha8Rng) -> VariantId {
        match self.policy {
            AssignmentPolicy::Constant(variant) => variant,
            AssignmentPolicy::Production => {
                let u: f64 = rng.random();
                // Rounding can leave the last cumulative weight just below 1.
                let index = self
                    .cdf
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(self.cdf.len() - 1);
                VariantId::from(index)
            }
        }
    }

    /// Appends one trajectory to `out` and returns its length.
    pub fn sample_into(
        &self,
        trajectory_id: u64,
        out: &mut Vec<SessionRecord>,
    ) -> Result<usize, SimulationError> {
        let mut rng = self.base.clone();
        rng.set_stream(trajectory_id);
        let cap = self.config.max_chain_length();
        let mut position = 0u32;
        loop {
            let variant = self.draw_variant(&mut rng);
            let gamma = self
                .knob
                .effective_gamma(self.config.gamma(variant), position);
            let u: f64 = rng.random();
            let shared = u < gamma;
            if shared && position + 1 == cap {
                return Err(SimulationError::CapExceeded { trajectory_id, cap });
            }
            out.push(SessionRecord {
                trajectory_id,
                position,
                variant,
                reward: u8::from(shared),
            });
            position += 1;
            if !shared {
                return Ok(position as usize);
            }
        }
    }

    pub fn sample(&self, trajectory_id: u64) -> Result<Trajectory, SimulationError> {
        let mut sessions = Vec::new();
        self.sample_into(trajectory_id, &mut sessions)?;
        Ok(Trajectory::from_valid(sessions))
    }

    /// Length of one trajectory, without keeping its sessions.
    pub fn sample_length(&self, trajectory_id: u64, scratch: &mut Vec<SessionRecord>) -> Result<usize, SimulationError> {
        scratch.clear();
        self.sample_into(trajectory_id, scratch)
    }
}

pub fn sample_trajectory(
    config: &SharingMdpConfig,
    policy: AssignmentPolicy,
    knob: MisspecificationKnob,
    seed: SimulationSeed,
    trajectory_id: u64,
) -> Result<Trajectory, SimulationError> {
    ChainSampler::new(config, policy, knob, seed)?.sample(trajectory_id)
}

/// Samples trajectories `0..n_trajectories`, logged under the config's
/// production policy.
pub fn sample_dataset(
    config: &SharingMdpConfig,
    policy: AssignmentPolicy,
    knob: MisspecificationKnob,
    seed: SimulationSeed,
    n_trajectories: usize,
) -> Result<Dataset, SimulationError> {
    if n_trajectories == 0 {
        return Err(SimulationError::NoTrajectories);
    }
    let sampler = ChainSampler::new(config, policy, knob, seed)?;
    let chunks = n_trajectories.div_ceil(CHUNK_TRAJECTORIES);
    let parts = parallel::map_indexed(chunks, |chunk| {
        let start = chunk * CHUNK_TRAJECTORIES;
        let end = (start + CHUNK_TRAJECTORIES).min(n_trajectories);
        let mut sessions = Vec::with_capacity((end - start) * 2);
        let mut lengths = Vec::with_capacity(end - start);
        for id in start..end {
            lengths.push(sampler.sample_into(id as u64, &mut sessions)?);
        }
        Ok::<_, SimulationError>((sessions, lengths))
    });

    let mut sessions = Vec::new();
    let mut lengths = Vec::with_capacity(n_trajectories);
    for part in parts {
        let (s, l) = part?;
        sessions.extend(s);
        lengths.extend(l);
    }
    Ok(Dataset::from_valid_parts(
        config.policy().clone(),
        sessions,
        lengths,
    ))
}

/// Mean trajectory length under the constant policy for `variant`, i.e. a
/// Monte-Carlo estimate of `V(π_a)` in sessions per seed session.
pub fn monte_carlo_value(
    config: &SharingMdpConfig,
    variant: VariantId,
    n_trajectories: usize,
    seed: SimulationSeed,
) -> Result<f64, SimulationError> {
    Ok(mean_length(
        config,
        AssignmentPolicy::Constant(variant),
        MisspecificationKnob::none(),
        seed,
        n_trajectories,
    )? .0)
}

/// Mean and sample variance of trajectory length.
pub fn mean_length(
    config: &SharingMdpConfig,
    policy: AssignmentPolicy,
    knob: MisspecificationKnob,
    seed: SimulationSeed,
    n_trajectories: usize,
) -> Result<(f64, f64), SimulationError> {
    if n_trajectories == 0 {
        return Err(SimulationError::NoTrajectories);
    }
    let sampler = ChainSampler::new(config, policy, knob, seed)?;
    let chunks = n_trajectories.div_ceil(CHUNK_TRAJECTORIES);
    // Integer moments keep the reduction exact and order-independent.
    let parts = parallel::map_indexed(chunks, |chunk| {
        let start = chunk * CHUNK_TRAJECTORIES;
        let end = (start + CHUNK_TRAJECTORIES).min(n_trajectories);
        let mut scratch = Vec::new();
        let (mut sum, mut sum_sq) = (0u128, 0u128);
        for id in start..end {
            let len = sampler.sample_length(id as u64, &mut scratch)? as u128;
            sum += len;
            sum_sq += len * len;
        }
        Ok::<_, SimulationError>((sum, sum_sq))
    });
    let (mut sum, mut sum_sq) = (0u128, 0u128);
    for part in parts {
        let (s, q) = part?;
        sum += s;
        sum_sq += q;
    }
    let n = n_trajectories as f64;
    let mean = sum as f64 / n;
    let variance = if n_trajectories > 1 {
        (sum_sq as f64 - sum as f64 * mean) / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, variance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_trajectory, ProductionPolicy};

    fn config(gammas: Vec<f64>, cap: u32) -> SharingMdpConfig {
        let n = gammas.len();
        SharingMdpConfig::new(ProductionPolicy::uniform(n).unwrap(), gammas, cap).unwrap()
    }

    #[test]
    fn zero_gamma_gives_single_sessions() {
        let config = config(vec![0.0, 0.0], 10);
        for policy in [
            AssignmentPolicy::Production,
            AssignmentPolicy::Constant(VariantId(1)),
        ] {
            let dataset = sample_dataset(&config, policy, MisspecificationKnob::none(), SimulationSeed::new(3), 500).unwrap();
            assert!(dataset.trajectories().all(|t| t.len() == 1 && t[0].reward == 0));
        }
        assert_eq!(
            monte_carlo_value(&config, VariantId(0), 1000, SimulationSeed::new(1)).unwrap(),
            1.0
        );
    }

    #[test]
    fn cap_exceeded_is_an_error() {
        let config = config(vec![0.99, 0.99], 2);
        let err = sample_dataset(
            &config,
            AssignmentPolicy::Production,
            MisspecificationKnob::none(),
            SimulationSeed::new(0),
            100,
        )
        .unwrap_err();
        assert!(matches!(err, SimulationError::CapExceeded { cap: 2, .. }));
    }

    #[test]
    fn cap_allows_chains_of_exactly_cap_length() {
        // With cap 1 every session must fail to share; γ = 0 always does.
        let config = config(vec![0.0, 0.0], 1);
        assert!(sample_trajectory(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), SimulationSeed::new(0), 0).is_ok());
    }

    #[test]
    fn unknown_constant_variant() {
        let config = config(vec![0.1, 0.2], 100);
        assert!(matches!(
            ChainSampler::new(&config, AssignmentPolicy::Constant(VariantId(2)), MisspecificationKnob::none(), SimulationSeed::new(0)),
            Err(SimulationError::UnknownVariant { variant: 2, .. })
        ));
        assert_eq!(
            sample_dataset(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), SimulationSeed::new(0), 0),
            Err(SimulationError::NoTrajectories)
        );
    }

    #[test]
    fn dataset_matches_individual_trajectories() {
        let config = SharingMdpConfig::three_variant_reference();
        let seed = SimulationSeed::new(11).with_stream(4);
        let knob = MisspecificationKnob::none();
        let dataset = sample_dataset(&config, AssignmentPolicy::Production, knob, seed, 5000).unwrap();
        for id in [0usize, 1, 4095, 4096, 4999] {
            let single = sample_trajectory(&config, AssignmentPolicy::Production, knob, seed, id as u64).unwrap();
            assert_eq!(dataset.trajectory(id), single.sessions());
        }
        assert!(dataset.trajectories().all(|t| check_trajectory(t).is_ok()));
    }

    #[test]
    fn determinism_and_worker_independence() {
        let config = SharingMdpConfig::three_variant_reference();
        let seed = SimulationSeed::new(99);
        let run = || sample_dataset(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), seed, 1000).unwrap();
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a, parallel::with_workers(1, run));
        assert_eq!(a, parallel::with_workers(8, run));
        let other = sample_dataset(&config, AssignmentPolicy::Production, MisspecificationKnob::none(), seed.with_stream(1), 1000).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn drift_is_clamped_and_zero_drift_is_identity() {
        let knob = MisspecificationKnob::drift(0.5);
        assert_eq!(knob.effective_gamma(0.3, 0), 0.3);
        assert_eq!(knob.effective_gamma(0.3, 10), MAX_EFFECTIVE_GAMMA);
        assert_eq!(MisspecificationKnob::drift(-0.2).effective_gamma(0.3, 5), 0.0);
        assert_eq!(MisspecificationKnob::none().effective_gamma(0.3, 1_000), 0.3);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        let base = SimulationSeed::new(5);
        assert_eq!(base.derive(&[1, 2]), base.derive(&[1, 2]));
        assert_ne!(base.derive(&[1, 2]), base.derive(&[2, 1]));
        assert_ne!(base.derive(&[1]).key(), base.key());
    }
}
