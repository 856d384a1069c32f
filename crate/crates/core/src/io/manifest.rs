use serde::{Deserialize, Serialize};

use crate::estimators::EstimatorKind;
use crate::simulator::SimulationSeed;

/// Provenance attached to every output: enough to regenerate the data
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub format_version: u32,
    /// Subcommand that produced the output.
    #[serde(default)]
    pub command: String,
    pub command_line: Vec<String>,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<SimulationSeed>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_variant: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub estimators: Vec<EstimatorKind>,
    /// The full experiment file, as TOML.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, timestamp: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: super::FORMAT_VERSION,
            command: String::new(),
            command_line,
            timestamp,
            seed: None,
            n_trajectories: None,
            constant_variant: None,
            workers: None,
            estimators: Vec::new(),
            config: None,
            inputs: Vec::new(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest serialises")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `# manifest: {...}` comment line used by text outputs.
    pub fn comment_line(&self) -> String {
        format!("{}{}\n", MANIFEST_PREFIX, self.to_json_line())
    }
}

pub(crate) const MANIFEST_PREFIX: &str = "# manifest: ";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut m = RunManifest::new(vec!["simulate".into(), "--n".into(), "5".into()], "2024-01-01T00:00:00Z".into());
        m.seed = Some(SimulationSeed::new(3).with_stream(2));
        m.config = Some("[[variants]]\n".into());
        let line = m.comment_line();
        assert!(line.starts_with(MANIFEST_PREFIX) && line.ends_with('\n') && line.matches('\n').count() == 1);
        assert_eq!(RunManifest::from_json(&m.to_json_line()).unwrap(), m);
    }
}
