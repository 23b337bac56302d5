//! Run manifests: every resolved parameter of an experiment, enough to
//! re-run it bit for bit with `replay`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use reservoir_smpc::controller::{Policy, RecedingConfig, RunStats};
use reservoir_smpc::eval::LabelledPolicy;

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub created: DateTime<Utc>,
    /// Worker threads the run used (results do not depend on it).
    pub threads: usize,
    pub inputs: Inputs,
    /// Violation level and confidence behind the scenario count, when it was
    /// derived rather than given.
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub receding: RecedingConfig,
    pub experiment: Experiment,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub config: PathBuf,
    pub inflow: PathBuf,
    pub train_start: DateTime<Utc>,
    pub train_end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Experiment {
    Run {
        policy: Policy,
        steps: usize,
        stats: RunStats,
    },
    Montecarlo {
        policies: Vec<LabelledPolicy>,
        replicates: usize,
        steps: usize,
        dry_weight: f64,
        seed: u64,
        curves: bool,
        failures: usize,
    },
}

impl Manifest {
    pub fn new(inputs: Inputs, epsilon: Option<f64>, beta: Option<f64>, receding: RecedingConfig, experiment: Experiment) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            created: Utc::now(),
            threads: rayon::current_num_threads(),
            inputs,
            epsilon,
            beta,
            receding,
            experiment,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: not a run manifest: {e}", path.display())).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn json_round_trip() {
        let t = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        let inputs = Inputs {
            config: "/data/reservoir.cfg".into(),
            inflow: "/data/inflow.csv".into(),
            train_start: t,
            train_end: t + chrono::Duration::hours(9000),
        };
        let receding = RecedingConfig {
            scaling: 0.1 + 0.2,
            ..RecedingConfig::default()
        };
        let m = Manifest::new(
            inputs,
            Some(0.2),
            Some(1e-6),
            receding,
            Experiment::Run {
                policy: Policy::Prophet,
                steps: 48,
                stats: RunStats::default(),
            },
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(Manifest::read(&path).unwrap(), m);
    }

    #[test]
    fn garbage_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, "{}").unwrap();
        let err = Manifest::read(&path).unwrap_err();
        assert!(err.is::<UsageError>());
    }
}
