use serde::{Deserialize, Serialize};

use super::{Activation, DenseLayer, Layer, Network, Task};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::stochastic::{DropoutLayer, NoiseMode, NoiseSpec, NoisyDenseLayer};

/// Layer widths of a dense stack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            activation: Activation::Relu,
        }
    }

    pub fn with_activation(mut self, a: Activation) -> Self {
        self.activation = a;
        self
    }
}

/// The four model families compared throughout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Deterministic,
    /// Dropout after every hidden activation, kept live at inference.
    McDropout { p: f64 },
    /// Weight noise on every dense layer.
    Noise(NoiseSpec),
}

impl ModelKind {
    pub fn mcni_fixed(alpha: f64) -> Self {
        ModelKind::Noise(NoiseSpec::fixed(alpha))
    }

    pub fn mcni_learned(alpha_init: f64) -> Self {
        ModelKind::Noise(NoiseSpec::learned(alpha_init))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Deterministic => "deterministic",
            ModelKind::McDropout { .. } => "mc_dropout",
            ModelKind::Noise(s) if s.mode == NoiseMode::Fixed => "mcni_fixed",
            ModelKind::Noise(_) => "mcni_learned",
        }
    }
}

/// Builds a freshly initialized network.
///
/// Dense layer `k` is initialized from `rng.derive(k)`, so every model kind
/// built from the same stream starts from identical weights.
pub fn build_network(arch: &Architecture, kind: &ModelKind, task: Task, rng: &RandomStream) -> Result<Network> {
    if arch.input_dim == 0 || arch.output_dim == 0 || arch.hidden.iter().any(|&h| h == 0) {
        return Err(Error::InvalidArgument(format!("layer widths must be positive: {arch:?}")));
    }
    let mut widths = vec![arch.input_dim];
    widths.extend(&arch.hidden);
    widths.push(arch.output_dim);
    let n_dense = widths.len() - 1;

    let mut layers = Vec::new();
    for k in 0..n_dense {
        let last = k + 1 == n_dense;
        let act = if last { Activation::Identity } else { arch.activation };
        let mut sub = rng.derive(k as u64);
        let dense = DenseLayer::init(widths[k], widths[k + 1], act, &mut sub);
        match kind {
            ModelKind::Noise(spec) => {
                layers.push(Layer::Noisy(NoisyDenseLayer::new(dense.weight, dense.bias, act, *spec)?));
            }
            _ => layers.push(Layer::Dense(dense)),
        }
        if let (ModelKind::McDropout { p }, false) = (kind, last) {
            layers.push(Layer::Dropout(DropoutLayer::new(*p)?));
        }
    }
    Network::new(layers, task)
}

/// Serializes a network (weights, noise levels, training epochs) as JSON.
pub fn network_to_json(net: &Network) -> Result<String> {
    Ok(serde_json::to_string_pretty(net)?)
}

/// Inverse of [`network_to_json`]; layer shapes are re-validated.
pub fn network_from_json(text: &str) -> Result<Network> {
    let raw: Network = serde_json::from_str(text)?;
    let mut net = Network::new(raw.layers().to_vec(), raw.task())?;
    net.epochs_trained = raw.epochs_trained;
    Ok(net)
}

