//! Declarative experiment configuration (TOML), one file per study.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use reachpac_core::dynamics::{
    DisturbanceModel, Duffing, Frozen, InitialDistribution, SamplingSpec, SystemSpec, VectorField,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            sampling: SamplingConfig::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemKind {
    /// Benchmark oscillator; the horizon parameters live alongside.
    Duffing { damping: f64 },
    /// Identity flow: terminal state equals initial state.
    Frozen { dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    #[serde(flatten)]
    pub kind: SystemKind,
    pub t0: f64,
    pub t1: f64,
    pub step: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        // stand-in benchmark constants; none of them are canonical, so
        // everything here is configurable
        Self {
            kind: SystemKind::Duffing { damping: 0.3 },
            t0: 0.0,
            t1: 2.0,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Point { center: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, std_dev: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    None,
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub initial: InitialConfig,
    pub disturbance: DisturbanceConfig,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            initial: InitialConfig::Ball {
                center: vec![0.5, 0.0],
                radius: 0.5,
            },
            disturbance: DisturbanceConfig::None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Samples used to fit the initial set estimate.
    pub n_train: usize,
    /// Fresh samples per certification batch (M for holdout, K for the
    /// conformal routes).
    pub n_certify: usize,
    /// Samples used to fit the set in the comparison study; larger than
    /// n_train so the fitted boundary is tight enough for the scenario
    /// update to shrink the set on every seed.
    pub n_train_comparison: usize,
    pub beta: f64,
    pub alpha: f64,
    pub repetitions: usize,
    /// Refit the set inside every repetition instead of once up front.
    pub refit_per_run: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_train: 1500,
            n_certify: 1500,
            n_train_comparison: 12_000,
            beta: 1e-9,
            alpha: 0.05,
            repetitions: 50,
            refit_per_run: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ex = &self.experiment;
        if ex.n_train == 0 || ex.n_certify == 0 || ex.repetitions == 0 {
            return Err(ConfigError::Invalid("counts must be positive".to_string()));
        }
        if !(ex.beta > 0.0 && ex.beta < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "beta must lie in (0,1), got {}",
                ex.beta
            )));
        }
        if !(ex.alpha > 0.0 && ex.alpha < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "alpha must lie in (0,1), got {}",
                ex.alpha
            )));
        }
        Ok(())
    }

    /// The configured vector field behind a common interface.
    pub fn field(&self) -> ConfiguredField {
        match self.system.kind {
            SystemKind::Duffing { damping } => ConfiguredField::Duffing(Duffing { damping }),
            SystemKind::Frozen { dim } => ConfiguredField::Frozen(Frozen { dim }),
        }
    }

    pub fn system_spec(&self) -> Result<SystemSpec<ConfiguredField>, ConfigError> {
        SystemSpec::new(
            self.field(),
            self.system.t0,
            self.system.t1,
            self.system.step,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Sampling spec with the seed replaced (stream separation is the
    /// caller's responsibility).
    pub fn sampling_spec(&self, seed: u64) -> SamplingSpec {
        let initial = match &self.sampling.initial {
            InitialConfig::Point { center } => InitialDistribution::Point {
                center: center.clone(),
            },
            InitialConfig::Ball { center, radius } => InitialDistribution::Ball {
                center: center.clone(),
                radius: *radius,
            },
            InitialConfig::Box { lower, upper } => InitialDistribution::Box {
                lower: lower.clone(),
                upper: upper.clone(),
            },
            InitialConfig::Gaussian { mean, std_dev } => InitialDistribution::Gaussian {
                mean: mean.clone(),
                std_dev: std_dev.clone(),
            },
        };
        let disturbance = match &self.sampling.disturbance {
            DisturbanceConfig::None => DisturbanceModel::None,
            DisturbanceConfig::UniformBox { lower, upper } => DisturbanceModel::UniformBox {
                lower: lower.clone(),
                upper: upper.clone(),
            },
        };
        SamplingSpec {
            initial,
            disturbance,
            seed,
        }
    }
}

/// Dispatch enum over the vector fields the config can name.
#[derive(Debug, Clone)]
pub enum ConfiguredField {
    Duffing(Duffing),
    Frozen(Frozen),
}

impl VectorField for ConfiguredField {
    fn state_dim(&self) -> usize {
        match self {
            Self::Duffing(f) => f.state_dim(),
            Self::Frozen(f) => f.state_dim(),
        }
    }

    fn disturbance_dim(&self) -> usize {
        match self {
            Self::Duffing(f) => f.disturbance_dim(),
            Self::Frozen(f) => f.disturbance_dim(),
        }
    }

    fn eval(&self, t: f64, x: &[f64], d: &[f64], out: &mut [f64]) {
        match self {
            Self::Duffing(f) => f.eval(t, x, d, out),
            Self::Frozen(f) => f.eval(t, x, d, out),
        }
    }
}
