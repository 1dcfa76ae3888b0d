//! Run configuration: TOML files merged over per-command defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{default_probes, CovarianceEstimator, Nonlinearity};
use crate::nn::{Activation, Architecture, ModelKind, WeightDecay};
use crate::optim::{Family, GridSpec, OptimizerKind, TrainConfig};
use crate::stochastic::{Granularity, NoiseSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

impl From<HiddenActivation> for Activation {
    fn from(a: HiddenActivation) -> Self {
        match a {
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseGranularity {
    Layer,
    Element,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub activation: HiddenActivation,
    /// Noise level of fixed-noise models.
    pub alpha: f64,
    /// Starting noise level of learned-noise models.
    pub alpha_init: f64,
    /// Coefficient of the anti-collapse term for learned noise.
    pub alpha_penalty: f64,
    pub granularity: NoiseGranularity,
    pub dropout_p: f64,
}

impl ModelSection {
    pub fn new(hidden: &[usize], alpha: f64, dropout_p: f64) -> Self {
        Self {
            hidden: hidden.to_vec(),
            activation: HiddenActivation::Relu,
            alpha,
            alpha_init: alpha,
            alpha_penalty: 0.0,
            granularity: NoiseGranularity::Layer,
            dropout_p,
        }
    }

    pub fn architecture(&self, input_dim: usize, output_dim: usize) -> Architecture {
        Architecture::new(input_dim, &self.hidden, output_dim).with_activation(self.activation.into())
    }

    /// Model of `family`; `param` overrides the family's own hyperparameter.
    pub fn kind(&self, family: Family, param: Option<f64>) -> ModelKind {
        let g = match self.granularity {
            NoiseGranularity::Layer => Granularity::PerLayerScalar,
            NoiseGranularity::Element => Granularity::PerElement,
        };
        match family {
            Family::Deterministic => ModelKind::Deterministic,
            Family::McDropout => ModelKind::McDropout {
                p: param.unwrap_or(self.dropout_p),
            },
            Family::McniFixed => ModelKind::Noise(NoiseSpec::fixed(param.unwrap_or(self.alpha)).with_granularity(g)),
            Family::McniLearned => ModelKind::Noise(
                NoiseSpec::learned(param.unwrap_or(self.alpha_init))
                    .with_granularity(g)
                    .with_penalty(self.alpha_penalty),
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("model.hidden must list positive widths, got {:?}", self.hidden)));
        }
        for (name, v) in [("alpha", self.alpha), ("alpha_init", self.alpha_init), ("alpha_penalty", self.alpha_penalty)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("model.{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("model.dropout_p must be in [0, 1), got {}", self.dropout_p)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub optimizer: OptimizerName,
    pub lr: f64,
    /// First-moment decay for Adam, momentum for SGD.
    pub momentum: f64,
    pub epochs: usize,
    /// 0 trains full-batch.
    pub batch_size: usize,
    /// 0 disables early stopping.
    pub patience: usize,
    pub weight_decay: f64,
}

impl TrainSection {
    pub fn new(lr: f64, epochs: usize, batch_size: usize, patience: usize) -> Self {
        Self {
            optimizer: OptimizerName::Adam,
            lr,
            momentum: 0.9,
            epochs,
            batch_size,
            patience,
            weight_decay: 0.0,
        }
    }

    pub fn optimizer_kind(&self, lr: f64) -> OptimizerKind {
        match self.optimizer {
            OptimizerName::Adam => OptimizerKind::Adam {
                lr,
                beta1: self.momentum,
                beta2: 0.999,
                eps: 1e-8,
            },
            OptimizerName::Sgd => OptimizerKind::sgd_momentum(lr, self.momentum),
        }
    }

    pub fn train_config(&self, n_train: usize, seed: u64) -> TrainConfig {
        self.train_config_with(self.lr, self.weight_decay, n_train, seed)
    }

    pub fn train_config_with(&self, lr: f64, weight_decay: f64, n_train: usize, seed: u64) -> TrainConfig {
        let batch = if self.batch_size == 0 { n_train.max(1) } else { self.batch_size };
        let mut cfg = TrainConfig::new(self.optimizer_kind(lr), self.epochs, batch, seed);
        cfg.early_stop_patience = self.patience;
        cfg.weight_decay = WeightDecay::uniform(weight_decay);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("train.lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("train.momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("train.weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Config("seeds must not be empty".into()));
    }
    Ok(())
}

fn check_passes(passes: usize) -> Result<()> {
    if passes == 0 {
        return Err(Error::Config("passes must be >= 1".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyInputPlacement {
    Grid,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub seeds: Vec<u64>,
    pub passes: usize,
    pub n_points: usize,
    pub inputs: ToyInputPlacement,
    pub models: Vec<Family>,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            passes: 500,
            n_points: 200,
            inputs: ToyInputPlacement::Grid,
            models: vec![Family::McniFixed, Family::McniLearned, Family::McDropout],
            model: ModelSection::new(&[100], 0.05, 0.2),
            train: TrainSection::new(0.005, 500, 0, 0),
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        check_passes(self.passes)?;
        if self.n_points < 2 {
            return Err(Error::Config("n_points must be >= 2".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }
}

/// Which CSV columns are targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    /// Target column names; empty means the last column.
    pub targets: Vec<String>,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub passes: usize,
    pub families: Vec<Family>,
    /// Family whose NLL is the MSLL baseline.
    pub baseline: Family,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub grid: GridSpec,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            passes: 500,
            families: Family::ALL.to_vec(),
            baseline: Family::McDropout,
            data: DataSection {
                path: None,
                targets: vec![],
                split: [0.8, 0.1, 0.1],
            },
            model: ModelSection::new(&[50, 50], 0.01, 0.05),
            train: TrainSection::new(0.001, 100, 32, 3),
            grid: GridSpec::regression_default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        if self.passes < 2 {
            return Err(Error::Config("benchmark needs passes >= 2 for predictive variance".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("families must not be empty".into()));
        }
        if self.data.path.is_none() {
            return Err(Error::Config("no dataset given (data.path or --data)".into()));
        }
        let s = self.data.split;
        if s.iter().any(|v| !(*v >= 0.0)) || s[0] <= 0.0 || s[1] <= 0.0 || s[2] <= 0.0 || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("data.split must be three positive fractions summing to 1, got {s:?}")));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.grid.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    pub passes: usize,
    pub sigmas: Vec<f64>,
    /// Test points corrupted at every noise level.
    pub n_points: usize,
    pub n_train: usize,
    pub separation: f64,
    pub spread: f64,
    pub family: Family,
    /// Trained model to load instead of training one per seed.
    pub model_path: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            passes: 100,
            sigmas: vec![0.0, 0.05, 0.1, 0.2, 0.4],
            n_points: 20,
            n_train: 400,
            separation: 2.0,
            spread: 0.3,
            family: Family::McniFixed,
            model_path: None,
            model: ModelSection::new(&[32, 32], 0.05, 0.3),
            train: TrainSection::new(0.01, 50, 32, 0),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        check_passes(self.passes)?;
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config(format!("sigmas must be a non-empty list of values >= 0, got {:?}", self.sigmas)));
        }
        if self.n_points == 0 || self.n_train < 2 {
            return Err(Error::Config("n_points must be >= 1 and n_train >= 2".into()));
        }
        if !(self.spread > 0.0) || !(self.separation >= 0.0) {
            return Err(Error::Config("spread must be > 0 and separation >= 0".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTimeConfig {
    pub seed: u64,
    pub passes: Vec<usize>,
    pub repetitions: usize,
    pub batch_size: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub families: Vec<Family>,
    pub model: ModelSection,
}

impl Default for BenchTimeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            passes: vec![1, 10],
            repetitions: 10,
            batch_size: 500,
            input_dim: 32,
            output_dim: 10,
            families: Family::ALL.to_vec(),
            model: ModelSection::new(&[256, 256], 0.05, 0.3),
        }
    }
}

impl BenchTimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes.is_empty() || self.passes.contains(&0) {
            return Err(Error::Config(format!("passes must list values >= 1, got {:?}", self.passes)));
        }
        if self.repetitions < 2 {
            return Err(Error::Config("repetitions must be >= 2 to report a spread".into()));
        }
        if self.batch_size == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("batch_size, input_dim and output_dim must be >= 1".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("families must not be empty".into()));
        }
        self.model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpCheckConfig {
    pub seeds: Vec<u64>,
    pub widths: Vec<usize>,
    pub n_networks: usize,
    pub kernel_samples: usize,
    pub bias_std: f64,
    pub nonlinearity: Nonlinearity,
    pub estimator: CovarianceEstimator,
    pub probes: Vec<Vec<f64>>,
}

impl Default for GpCheckConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            widths: vec![64, 512, 4096],
            n_networks: 200,
            kernel_samples: 1_000_000,
            bias_std: 1.0,
            nonlinearity: Nonlinearity::Relu,
            estimator: CovarianceEstimator::Conditional,
            probes: default_probes(),
        }
    }
}

impl GpCheckConfig {
    pub fn validate(&self) -> Result<()> {
        check_seeds(&self.seeds)?;
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("widths must list values >= 1, got {:?}", self.widths)));
        }
        if self.n_networks == 0 || self.kernel_samples == 0 {
            return Err(Error::Config("n_networks and kernel_samples must be >= 1".into()));
        }
        if !(self.bias_std >= 0.0) {
            return Err(Error::Config(format!("bias_std must be >= 0, got {}", self.bias_std)));
        }
        if self.probes.len() < 2 {
            return Err(Error::Config("at least two probes are required".into()));
        }
        let q = self.probes[0].len();
        if q == 0 || self.probes.iter().any(|p| p.len() != q) {
            return Err(Error::Config("probes must share one positive dimension".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.probes[0].len()
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses `text` as TOML and lays it over `defaults`; unknown keys are
/// rejected.
pub fn parse_config<T: Serialize + DeserializeOwned>(text: &str, defaults: &T) -> Result<T> {
    let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut base = toml::Value::try_from(defaults).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut base, toml::Value::Table(user));
    base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Reads a config file, or returns the defaults when `path` is `None`.
pub fn load_config<T: Serialize + DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_config(&text, &T::default()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}
