//! Experiment configuration: a single JSON document that, together with its
//! seed, determines every output byte of a run. Precedence is
//! flags > config file > defaults; flag overrides are applied by the binary
//! before the config reaches [`crate::commands`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zofc_core::continual::{MethodVariant, Schedules, SyntheticStreamSpec, TrainBudget};
use zofc_core::metrics::FlatnessProbe;
use zofc_core::optim::SpsaConfig;

use crate::error::{CliError, CliResult};

/// Environment variable that redirects all output files into one directory.
pub const OUTPUT_DIR_ENV: &str = "ZOFC_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stream: StreamSource,
    pub variant: MethodVariant,
    pub adapter_rank: usize,
    pub spsa: SpsaConfig,
    pub schedules: Schedules,
    pub budget: TrainBudget,
    pub seed: u64,
    pub probe: ProbeSettings,
    pub output: OutputPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stream: StreamSource::default(),
            variant: MethodVariant::zofc(),
            adapter_rank: 5,
            spsa: SpsaConfig::default(),
            schedules: Schedules::default(),
            budget: TrainBudget::default(),
            seed: 0,
            probe: ProbeSettings::default(),
            output: OutputPaths::default(),
        }
    }
}

/// Where the task stream comes from: generated Gaussian clusters, or a
/// feature file of precomputed backbone outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    Synthetic(SyntheticStreamSpec),
    Features(FeatureStreamSpec),
}

impl Default for StreamSource {
    fn default() -> Self {
        StreamSource::Synthetic(SyntheticStreamSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureStreamSpec {
    pub path: PathBuf,
    pub classes_per_task: usize,
    /// Per-class fraction of examples used for training (the rest test).
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

/// Flatness-probe settings applied after each task during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    pub rhos: Vec<f64>,
    pub probe: FlatnessProbe,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            rhos: vec![0.01, 0.05],
            probe: FlatnessProbe::Ascent { fd_step: 1e-5 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub report: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io_config(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.variant
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.spsa
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.budget
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        if self.adapter_rank == 0 {
            return Err(CliError::config("adapter_rank must be at least 1"));
        }
        for &rho in &self.probe.rhos {
            if !(rho > 0.0) || !rho.is_finite() {
                return Err(CliError::config(format!(
                    "probe rho must be positive and finite, got {rho}"
                )));
            }
        }
        if let StreamSource::Features(spec) = &self.stream {
            if spec.classes_per_task == 0 {
                return Err(CliError::config("classes_per_task must be at least 1"));
            }
            if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
                return Err(CliError::config(format!(
                    "train_fraction must lie strictly between 0 and 1, got {}",
                    spec.train_fraction
                )));
            }
        }
        Ok(())
    }
}

/// Resolve an output path, honoring the `ZOFC_OUT_DIR` override: when the
/// variable is set, the file is placed (by name) inside that directory.
pub fn resolve_output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => {
            let name = path.file_name().unwrap_or(path.as_os_str());
            PathBuf::from(dir).join(name)
        }
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn roundtrip_preserves_config() {
        let config = ExperimentConfig {
            seed: 42,
            probe: ProbeSettings {
                rhos: vec![0.02],
                ..ProbeSettings::default()
            },
            output: OutputPaths {
                report: Some(PathBuf::from("out/report.json")),
                checkpoint: None,
            },
            ..ExperimentConfig::default()
        };
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn empty_object_uses_all_defaults() {
        let config: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, ExperimentConfig::default());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"sede": 3}"#);
        assert!(err.is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let config = ExperimentConfig {
            adapter_rank: 0,
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());

        let config = ExperimentConfig {
            probe: ProbeSettings {
                rhos: vec![0.0],
                ..ProbeSettings::default()
            },
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());

        let config = ExperimentConfig {
            stream: StreamSource::Features(FeatureStreamSpec {
                path: PathBuf::from("x.zofc"),
                classes_per_task: 2,
                train_fraction: 1.5,
            }),
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
