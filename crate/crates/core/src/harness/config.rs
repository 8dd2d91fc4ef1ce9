//! TOML experiment configuration. Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::colk::ColkConfig;
use crate::datagen::DatasetSpec;
use crate::decentralized::{Mode, NetworkConfig};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossModel};
use crate::polk::{PolkConfig, Schedule, DEFAULT_BUDGET_EXPONENT};
use crate::rkhs::KernelSpec;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Polk,
    Colk,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polk" => Ok(Algorithm::Polk),
            "colk" => Ok(Algorithm::Colk),
            other => Err(Error::usage(format!("unknown algorithm {other:?} (expected polk or colk)"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Polk => "polk",
            Algorithm::Colk => "colk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolkSection {
    pub eta: f64,
    pub lambda: f64,
    pub parsimony: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_budget_exponent")]
    pub budget_exponent: f64,
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

fn default_budget_exponent() -> f64 {
    DEFAULT_BUDGET_EXPONENT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColkSection {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub parsimony: f64,
    #[serde(default)]
    pub mu_risk: f64,
    #[serde(default = "default_max_moment")]
    pub max_moment: u32,
    #[serde(default)]
    pub semideviation: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_clip: Option<f64>,
}

fn default_max_moment() -> u32 {
    2
}

/// Where training and test samples come from, and how each seed's
/// training stream is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Samples generated before splitting.
    pub n_total: usize,
    pub test_fraction: f64,
    /// Seed of the generated pool and of the train/test split.
    pub data_seed: u64,
    /// Training samples per run, drawn from the training split by the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    /// Passes over the training samples, reshuffled each pass.
    pub passes: usize,
    /// Use these CSV files instead of generating data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_file: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_total: 6250,
            test_fraction: 0.2,
            data_seed: 0,
            train_size: None,
            passes: 1,
            train_file: None,
            test_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    /// Class count for classification losses; defaults to the dataset's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default = "default_eval_period")]
    pub eval_period: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polk: Option<PolkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colk: Option<ColkSection>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSpec>,
}

fn default_loss() -> LossKind {
    LossKind::Square
}

fn default_eval_period() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn loss_model(&self) -> Result<LossModel> {
        let classes = match (self.classes, &self.dataset) {
            (Some(c), _) => c,
            (None, Some(DatasetSpec::GaussianMixtures(m))) => m.classes,
            (None, _) => 0,
        };
        LossModel::from_kind(self.loss, classes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn polk_config(&self) -> Result<PolkConfig> {
        let s = self.polk.as_ref().ok_or_else(|| Error::Config("missing [polk] section".into()))?;
        let cfg = PolkConfig {
            eta: s.eta,
            lambda: s.lambda,
            schedule: s.schedule,
            parsimony: s.parsimony,
            budget_exponent: s.budget_exponent,
            loss: self.loss_model()?,
            kernel: self.kernel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn colk_config(&self) -> Result<ColkConfig> {
        let s = self.colk.as_ref().ok_or_else(|| Error::Config("missing [colk] section".into()))?;
        let cfg = ColkConfig {
            alpha: s.alpha,
            beta: s.beta,
            lambda: s.lambda,
            mu_risk: s.mu_risk,
            max_moment: s.max_moment,
            semideviation: s.semideviation,
            parsimony: s.parsimony,
            risk_clip: s.risk_clip,
            loss: self.loss_model()?,
            kernel: self.kernel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate().map_err(|e| Error::Config(e.to_string()))?;
        match self.algorithm {
            Algorithm::Polk => self.polk_config().map(drop)?,
            Algorithm::Colk => self.colk_config().map(drop)?,
        }
        if self.eval_period == 0 {
            return Err(Error::Config("eval_period must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let d = &self.data;
        if d.passes == 0 {
            return Err(Error::Config("data.passes must be positive".into()));
        }
        match (&d.train_file, &d.test_file, &self.dataset) {
            (Some(_), Some(_), _) => {}
            (Some(_), None, _) | (None, Some(_), _) => {
                return Err(Error::Config("data.train_file and data.test_file go together".into()))
            }
            (None, None, None) => return Err(Error::Config("need a [dataset] section or data files".into())),
            (None, None, Some(spec)) => {
                spec.validate()?;
                if d.n_total < 2 {
                    return Err(Error::Config("data.n_total must be at least 2".into()));
                }
                if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
                    return Err(Error::Config("data.test_fraction must lie in (0, 1)".into()));
                }
            }
        }
        if d.train_size == Some(0) {
            return Err(Error::Config("data.train_size must be positive".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        e => Error::Config(format!("{}: {e}", path.display())),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml(&read_text(path)?).map_err(|e| in_file(path, e))
}

/// Parses an experiment config without validating it, for callers that
/// fill in fields (such as data files) before validation.
pub fn read_config(path: &Path) -> Result<ExperimentConfig> {
    toml::from_str(&read_text(path)?).map_err(|e| in_file(path, Error::Config(e.to_string())))
}

/// Configuration of a network simulation. The mode comes from the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    pub eta: f64,
    pub lambda: f64,
    pub budget: f64,
    #[serde(default)]
    pub penalty: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Record metrics every this many rounds (and after the last).
    #[serde(default = "default_record_period")]
    pub record_period: usize,
    pub kernel: KernelSpec,
    pub dataset: DatasetSpec,
}

fn default_delta() -> f64 {
    1.0
}

fn default_probes() -> usize {
    200
}

fn default_record_period() -> usize {
    1
}

impl SimulationConfig {
    pub fn network_config(&self, mode: Mode) -> Result<NetworkConfig> {
        let classes = match (self.classes, &self.dataset) {
            (Some(c), _) => c,
            (None, DatasetSpec::GaussianMixtures(m)) => m.classes,
            (None, _) => 0,
        };
        let cfg = NetworkConfig {
            mode,
            eta: self.eta,
            lambda: self.lambda,
            penalty: self.penalty,
            delta: self.delta,
            gamma: self.gamma,
            budget: self.budget,
            loss: LossModel::from_kind(self.loss, classes).map_err(|e| Error::Config(e.to_string()))?,
            kernel: self.kernel,
            probes: self.probes,
        };
        cfg.validate()?;
        self.dataset.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.network_config(Mode::Consensus)?;
        Ok(cfg)
    }
}

pub fn load_simulation_config(path: &Path) -> Result<SimulationConfig> {
    SimulationConfig::from_toml(&read_text(path)?).map_err(|e| in_file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
algorithm = "polk"

[kernel]
family = "gaussian"
bandwidth = 0.5

[polk]
eta = 0.1
lambda = 0.01
parsimony = 0.05

[dataset]
kind = "regression-outliers"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.eval_period, 100);
        assert_eq!(cfg.polk.as_ref().unwrap().budget_exponent, 1.5);
        assert_eq!(cfg.polk.as_ref().unwrap().schedule, Schedule::Constant);
        assert_eq!(cfg.dataset, Some(DatasetSpec::from_name("regression-outliers").unwrap()));
        assert_eq!(cfg.loss_model().unwrap(), LossModel::Square);
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("eta = 0.1", "eta = 0.1\netaa = 2");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = MINIMAL.replace("kind = \"regression-outliers\"", "kind = \"regression-outliers\"\nnoise = 1");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn regularization_condition_cited() {
        let bad = MINIMAL.replace("lambda = 0.01", "lambda = 20.0");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(err.to_string().contains("Regularization Condition"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_algorithm_section() {
        let bad = MINIMAL.replace("algorithm = \"polk\"", "algorithm = \"colk\"");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
