//! Merged run configuration: model, training, generator and eval settings
//! loaded from one TOML file, with every field defaulted and all
//! validation problems reported together.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SyntheticSpec;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    /// Threshold for the precision metric.
    pub tau: f64,
    /// Seed for the random-baseline scorer.
    pub baseline_seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            tau: 0.5,
            baseline_seed: 0,
        }
    }
}

impl EvalSettings {
    pub fn problems(&self) -> Vec<String> {
        if self.tau.is_finite() && (0.0..=1.0).contains(&self.tau) {
            Vec::new()
        } else {
            vec![format!("eval.tau must be in [0, 1], got {}", self.tau)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; when set it overrides the model, train and generator
    /// seeds so one knob reseeds a whole run.
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generator: SyntheticSpec,
    pub eval: EvalSettings,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.apply_master_seed();
        Ok(cfg)
    }

    /// Propagate the master seed, if any, into the per-component seeds.
    pub fn apply_master_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.model.seed = seed;
            self.train.seed = seed;
            self.generator.seed = seed;
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.model.problems());
        out.extend(self.train.problems());
        out.extend(self.generator.problems());
        out.extend(self.eval.problems());
        if self.model.d_in != self.generator.dim {
            out.push(format!(
                "model.d_in ({}) must match generator.dim ({}) for generated scenes",
                self.model.d_in, self.generator.dim
            ));
        }
        out
    }

    /// Validate everything up front; all violations come back at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn master_seed_propagates() {
        let mut cfg = RunConfig {
            seed: Some(99),
            ..RunConfig::default()
        };
        cfg.apply_master_seed();
        assert_eq!(cfg.model.seed, 99);
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.generator.seed, 99);
    }

    #[test]
    fn problems_are_collected_across_sections() {
        let mut cfg = RunConfig::default();
        cfg.model.d_model = 0;
        cfg.train.learning_rate = -1.0;
        cfg.generator.smoothness = 2.0;
        cfg.eval.tau = 3.0;
        let problems = cfg.problems();
        assert!(problems.len() >= 4, "{problems:?}");
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn toml_roundtrip_with_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 7\n[model]\nd_model = 32\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.model.d_model, 32);
        assert_eq!(cfg.model.seed, 7, "master seed applies");
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32, "unset fields keep defaults");
    }

    #[test]
    fn unparseable_toml_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "model = \"not a table\"").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn mismatched_model_and_generator_width_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.generator.dim = 8;
        assert!(cfg.problems().iter().any(|p| p.contains("d_in")));
    }
}
