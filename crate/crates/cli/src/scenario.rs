use std::path::{Path, PathBuf};

use locnet_core::{ExperimentConfig, NetworkSource, ProblemData, SolverConfig};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Input of `locnet experiment`. Relative paths are resolved against the
/// directory holding the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Generated or inline network. Give exactly one of `network` and `problem_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSource>,
    /// Problem document with a `truth` block; its measurements are ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<PathBuf>,
    pub noise_sigmas: Vec<f64>,
    pub trials: usize,
    pub solvers: Vec<SolverConfig>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// Per-trial CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Aggregated JSON summary; printed to stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::read(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Resolves the network source and output paths against `base`.
    pub fn resolve(self, base: &Path) -> Result<(ExperimentConfig, Outputs), CliError> {
        let network = match (self.network, self.problem_file) {
            (Some(n), None) => n,
            (None, Some(file)) => {
                let path = base.join(file);
                let problem: ProblemData = crate::read_json(&path)?;
                NetworkSource::Inline { problem }
            }
            _ => return Err(CliError::Usage("scenario must give exactly one of `network` and `problem_file`".into())),
        };
        let outputs = Outputs {
            csv: self.outputs.csv.map(|p| base.join(p)),
            summary: self.outputs.summary.map(|p| base.join(p)),
        };
        let config = ExperimentConfig {
            network,
            noise_sigmas: self.noise_sigmas,
            trials: self.trials,
            solvers: self.solvers,
            master_seed: self.master_seed,
        };
        Ok((config, outputs))
    }
}

pub fn schema() -> String {
    let mut s = serde_json::to_string_pretty(&schemars::schema_for!(ScenarioFile)).expect("schema serializes");
    s.push('\n');
    s
}
