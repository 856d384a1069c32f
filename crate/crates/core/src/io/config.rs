//! The TOML experiment file.
//!
//! ```toml
//! [simulation]
//! max_chain_length = 1000000   # optional
//! depth_drift = 0.0            # optional
//!
//! [[variants]]
//! name = "a1"
//! probability = 0.5
//! gamma = 0.1                  # optional in policy-only files
//!
//! [sweep]                      # optional
//! sample_sizes = [100, 1000]   # default: logarithmic grid to 10^5
//! repetitions = 32
//! seed = 0
//! stream = 0
//! estimators = ["naive", "diff-in-qs", "diff-in-geometrics"]
//! ```

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::estimators::EstimatorKind;
use crate::experiment::{SweepPlan, DEFAULT_REPETITIONS, DEFAULT_SAMPLE_SIZES};
use crate::model::{ProductionPolicy, SharingMdpConfig, DEFAULT_MAX_CHAIN_LENGTH};
use crate::simulator::{MisspecificationKnob, SimulationSeed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_cap")]
    pub max_chain_length: u32,
    #[serde(default)]
    pub depth_drift: f64,
}

fn default_cap() -> u32 {
    DEFAULT_MAX_CHAIN_LENGTH
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            max_chain_length: DEFAULT_MAX_CHAIN_LENGTH,
            depth_drift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantEntry {
    pub name: String,
    pub probability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
}

fn default_sizes() -> Vec<usize> {
    DEFAULT_SAMPLE_SIZES.to_vec()
}

fn default_repetitions() -> u32 {
    DEFAULT_REPETITIONS
}

fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            sample_sizes: default_sizes(),
            repetitions: default_repetitions(),
            seed: 0,
            stream: 0,
            estimators: default_estimators(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    pub variants: Vec<VariantEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| FormatError::Toml(e.to_string()))?;
        let mut seen = HashSet::new();
        for v in &file.variants {
            if !seen.insert(v.name.as_str()) {
                return Err(FormatError::DuplicateName(v.name.clone()));
            }
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Three variants, `π_p = [0.5, 0.25, 0.25]`, `γ = [0.1, 0.2, 0.3]`, and
    /// the default sweep.
    pub fn reference() -> Self {
        let variant = |name: &str, probability, gamma| VariantEntry {
            name: name.into(),
            probability,
            gamma: Some(gamma),
        };
        Self {
            simulation: SimulationSection::default(),
            variants: vec![
                variant("a1", 0.5, 0.1),
                variant("a2", 0.25, 0.2),
                variant("a3", 0.25, 0.3),
            ],
            sweep: Some(SweepSection::default()),
        }
    }

    pub fn variant_names(&self) -> Vec<String> {
        self.variants.iter().map(|v| v.name.clone()).collect()
    }

    pub fn policy(&self) -> Result<ProductionPolicy, FormatError> {
        Ok(ProductionPolicy::new(
            self.variants.iter().map(|v| v.probability).collect(),
        )?)
    }

    pub fn mdp_config(&self) -> Result<SharingMdpConfig, FormatError> {
        let gammas = self
            .variants
            .iter()
            .map(|v| v.gamma.ok_or_else(|| FormatError::MissingGamma(v.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SharingMdpConfig::new(
            self.policy()?,
            gammas,
            self.simulation.max_chain_length,
        )?)
    }

    pub fn knob(&self) -> MisspecificationKnob {
        MisspecificationKnob::drift(self.simulation.depth_drift)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, FormatError> {
        let sweep = self.sweep.as_ref().ok_or(FormatError::MissingSweep)?;
        Ok(SweepPlan {
            config: self.mdp_config()?,
            sample_sizes: sweep.sample_sizes.clone(),
            repetitions: sweep.repetitions,
            base_seed: SimulationSeed::new(sweep.seed).with_stream(sweep.stream),
            estimators: sweep.estimators.clone(),
            knob: self.knob(),
        })
    }
}
