//! Experiment configuration: one TOML file, validated before any work starts.

use std::path::{Path, PathBuf};

use icudg_core::cohort::CohortConfig;
use icudg_core::eval::Protocol;
use icudg_core::features::Aggregation;
use icudg_core::labels::SuspicionMode;
use icudg_core::synth::GeneratorConfig;
use icudg_core::training::{SearchSpace, TrainConfig, N_FOLDS};
use icudg_core::Task;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub events: PathBuf,
    pub statics: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub suspicion: SuspicionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub aggregation: Aggregation,
    /// Also write normalised tensors of the first fold for inspection.
    pub dump_tensors: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Random draws per model; 0 trains the `[train]` configuration as is.
    pub n_draws: usize,
    pub space: SearchSpace,
}

/// How hourly predictions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AurocMode {
    /// Every labelled (stay, hour) pair is one prediction.
    #[default]
    Pooled,
    /// One prediction per stay: its highest hourly probability against whether any hour is positive.
    PerStay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub calibration_bins: usize,
    pub winsor_quantile: f64,
    pub auroc: AurocMode,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { calibration_bins: 10, winsor_quantile: 0.999, auroc: AurocMode::Pooled }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Drives splits, model initialisation and search draws.
    #[serde(default)]
    pub seed: u64,
    pub task: Task,
    #[serde(default = "all_protocols")]
    pub protocols: Vec<Protocol>,
    #[serde(default = "all_folds")]
    pub folds: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<GeneratorConfig>,
    #[serde(default)]
    pub cohort: CohortConfig,
    #[serde(default)]
    pub labels: LabelConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    /// `train.seed` is replaced per model by a seed derived from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_output_dir() -> PathBuf {
    "runs".into()
}

fn all_protocols() -> Vec<Protocol> {
    Protocol::ALL.to_vec()
}

fn all_folds() -> Vec<usize> {
    (0..N_FOLDS).collect()
}

fn field<T>(path: &str, r: icudg_core::Result<T>) -> AppResult<T> {
    r.map_err(|e| AppError::config(path, e.to_string()))
}

impl ExperimentConfig {
    /// Parses TOML text; errors name the offending field path.
    pub fn from_toml(text: &str) -> AppResult<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            AppError::config(if path == "." { String::new() } else { path }, e.inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. Relative data and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::config("", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.data {
            fix(&mut d.events);
            fix(&mut d.statics);
            if let Some(c) = &mut d.catalog {
                fix(c);
            }
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name == "." || self.name == ".." {
            return Err(AppError::config("name", "must be a non-empty plain directory name"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(AppError::config("seed", "must fit in a signed 64-bit integer"));
        }
        match (&self.data, &self.synth) {
            (None, None) => return Err(AppError::config("data", "either [data] or [synth] is required")),
            (Some(_), Some(_)) => return Err(AppError::config("synth", "[data] and [synth] are mutually exclusive")),
            (None, Some(s)) => {
                for (i, p) in s.profiles.iter().enumerate() {
                    field(&format!("synth.profiles[{i}]"), p.validate())?;
                }
                field("synth.profiles", s.validate())?;
                if s.seed > i64::MAX as u64 {
                    return Err(AppError::config("synth.seed", "must fit in a signed 64-bit integer"));
                }
            }
            (Some(_), None) => {}
        }
        if self.protocols.is_empty() {
            return Err(AppError::config("protocols", "at least one protocol is required"));
        }
        let mut folds = self.folds.clone();
        folds.sort_unstable();
        folds.dedup();
        if folds.is_empty() || folds.len() != self.folds.len() || folds.iter().any(|&k| k >= N_FOLDS) {
            return Err(AppError::config("folds", format!("must be distinct fold indices below {N_FOLDS}")));
        }
        let c = &self.cohort;
        let positive = [c.min_los_h, c.max_gap_h, c.max_baseline_creatinine];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) || !(c.min_onset_h.is_finite() && c.min_onset_h >= 0.0) {
            return Err(AppError::config("cohort", "thresholds must be finite and positive"));
        }
        field("train", self.train.validate())?;
        if self.search.n_draws > 0 {
            field("search.space", self.search.space.validate())?;
        }
        let e = &self.evaluation;
        if e.calibration_bins == 0 {
            return Err(AppError::config("evaluation.calibration_bins", "must be at least 1"));
        }
        if !(e.winsor_quantile > 0.0 && e.winsor_quantile <= 1.0) {
            return Err(AppError::config("evaluation.winsor_quantile", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// The configuration exactly as resolved, in TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("validated configs serialise")
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
task = "mortality"
[data]
events = "events.csv"
statics = "statics.csv"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.folds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.protocols.len(), 4);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_names_its_path() {
        let text = format!("{MINIMAL}[train]\nleraning_rate = 0.1\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("leraning_rate"), "{err}");
    }

    #[test]
    fn data_source_is_required() {
        let err = ExperimentConfig::from_toml("task = \"aki\"\n").unwrap_err();
        assert!(matches!(err, AppError::Config { ref path, .. } if path == "data"));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let text = format!("{MINIMAL}[train]\nlearning_rate = -1.0\n");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(matches!(err, AppError::Config { ref path, .. } if path == "train"));
        let text = MINIMAL.replace("task = \"mortality\"", "task = \"mortality\"\nfolds = [0, 7]");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap_err().exit_code(), 2);
    }
}
