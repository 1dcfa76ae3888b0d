//! Dense feed-forward networks with an explicit, cached backward pass.
//!
//! A [`Network`] is an ordered stack of [`Layer`]s. [`forward`] records a
//! [`ForwardTrace`] holding every input, pre-activation, and random draw of the
//! pass; [`backward`] walks the trace in reverse. Noise draws are constants of
//! the trace, so gradients with respect to `alpha` follow from the
//! reparameterization `W~ = W + alpha * eps`.

mod loss;
mod model;

pub use loss::{
    cross_entropy_grad, l2_penalty, l2_penalty_grad, loss_cross_entropy, loss_mse, mse_grad,
    softmax_rows, WeightDecay,
};
pub use model::{build_network, network_from_json, network_to_json, Architecture, ModelKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::stochastic::{
    alpha_gradient, dropout_forward, noisy_forward, noisy_forward_with, DropoutLayer, NoiseMode,
    NoisyDenseLayer,
};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    /// Row-wise softmax; only meaningful on the output layer.
    Softmax,
}

impl Activation {
    pub fn apply(self, z: &Tensor) -> Tensor {
        match self {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Identity => z.clone(),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Gradient w.r.t. the pre-activation `z`, given the output `a` and the
    /// upstream gradient `g` w.r.t. `a`.
    fn backward(self, z: &Tensor, a: &Tensor, g: &Tensor) -> Tensor {
        match self {
            Activation::Relu => z
                .zip_map(g, |z, g| if z > 0.0 { g } else { 0.0 })
                .expect("shapes fixed by trace"),
            Activation::Tanh => a
                .zip_map(g, |a, g| g * (1.0 - a * a))
                .expect("shapes fixed by trace"),
            Activation::Identity => g.clone(),
            Activation::Softmax => {
                let mut out = g.clone();
                for r in 0..a.rows() {
                    let s = a.row(r);
                    let gr = g.row(r);
                    let dot: f64 = s.iter().zip(gr).map(|(s, g)| s * g).sum();
                    for ((o, s), g) in out.row_mut(r).iter_mut().zip(s).zip(gr) {
                        *o = s * (g - dot);
                    }
                }
                out
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Regression,
    /// Output layer emits logits; probabilities come from a softmax.
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    /// Inference with stochastic mechanisms live (MC passes).
    Eval,
    /// Every stochastic mechanism off: the plain-network baseline.
    Deterministic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.cols() {
            return Err(Error::shape(format!(
                "dense weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for both weights and biases.
    pub fn init(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut RandomStream) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.uniform_range(-bound, bound))
            .collect();
        let b = (0..fan_out).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, w).expect("sized above"),
            bias: Tensor::vector(b),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Dense(DenseLayer),
    Noisy(NoisyDenseLayer),
    Dropout(DropoutLayer),
}

impl Layer {
    fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Dense(l) => Some((l.fan_in(), l.fan_out())),
            Layer::Noisy(l) => Some((l.fan_in(), l.fan_out())),
            Layer::Dropout(_) => None,
        }
    }

    fn kind_tag(&self) -> u8 {
        match self {
            Layer::Dense(_) => 0,
            Layer::Noisy(_) => 1,
            Layer::Dropout(_) => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    Weight,
    Bias,
    Alpha,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
    task: Task,
    /// Completed training epochs; zero means untrained.
    pub epochs_trained: usize,
    #[serde(skip)]
    version: u64,
}

impl Network {
    pub fn new(layers: Vec<Layer>, task: Task) -> Result<Self> {
        let net = Self {
            layers,
            task,
            epochs_trained: 0,
            version: 0,
        };
        net.check_chain()?;
        Ok(net)
    }

    fn check_chain(&self) -> Result<()> {
        let mut width: Option<usize> = None;
        let mut any = false;
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((fan_in, fan_out)) = layer.dims() {
                if let Some(w) = width {
                    if w != fan_in {
                        return Err(Error::shape_at(
                            i,
                            format!("fan_in {fan_in} does not match previous fan_out {w}"),
                        ));
                    }
                }
                width = Some(fan_out);
                any = true;
            }
        }
        if !any {
            return Err(Error::shape("network has no dense layers"));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access; invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.layers.iter().find_map(Layer::dims).map(|d| d.0).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().rev().find_map(Layer::dims).map(|d| d.1).unwrap_or(0)
    }

    /// True if any layer can inject randomness in `Eval` mode.
    pub fn is_stochastic(&self) -> bool {
        self.layers.iter().any(|l| match l {
            Layer::Noisy(_) => true,
            Layer::Dropout(d) => d.p > 0.0,
            Layer::Dense(_) => false,
        })
    }

    pub fn noisy_layers(&self) -> impl Iterator<Item = &NoisyDenseLayer> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Noisy(n) => Some(n),
            _ => None,
        })
    }

    /// Trainable parameters in canonical order: per layer weight, bias, and
    /// (learned noise only) alpha.
    pub fn parameters(&self) -> Vec<(ParamId, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    out.push((ParamId { layer: i, kind: ParamKind::Weight }, &d.weight));
                    out.push((ParamId { layer: i, kind: ParamKind::Bias }, &d.bias));
                }
                Layer::Noisy(n) => {
                    out.push((ParamId { layer: i, kind: ParamKind::Weight }, &n.weight));
                    out.push((ParamId { layer: i, kind: ParamKind::Bias }, &n.bias));
                    if n.spec.mode == NoiseMode::Learned {
                        out.push((ParamId { layer: i, kind: ParamKind::Alpha }, &n.alpha));
                    }
                }
                Layer::Dropout(_) => {}
            }
        }
        out
    }

    /// Same order as [`Network::parameters`]. Invalidates outstanding traces.
    pub fn parameters_mut(&mut self) -> Vec<(ParamId, &mut Tensor)> {
        self.version += 1;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    out.push((ParamId { layer: i, kind: ParamKind::Weight }, &mut d.weight));
                    out.push((ParamId { layer: i, kind: ParamKind::Bias }, &mut d.bias));
                }
                Layer::Noisy(n) => {
                    let learned = n.spec.mode == NoiseMode::Learned;
                    out.push((ParamId { layer: i, kind: ParamKind::Weight }, &mut n.weight));
                    out.push((ParamId { layer: i, kind: ParamKind::Bias }, &mut n.bias));
                    if learned {
                        out.push((ParamId { layer: i, kind: ParamKind::Alpha }, &mut n.alpha));
                    }
                }
                Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Random draws made by one layer during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerNoise {
    None,
    /// Weight noise `eps` (already scaled by `sigma_l`).
    Weight(Tensor),
    /// Scaled dropout mask (`0` or `1 / (1 - p)`).
    Mask(Tensor),
}

/// Where a forward pass gets its randomness.
pub enum NoiseSource<'a> {
    Fresh(&'a mut RandomStream),
    /// Reuse the draws of an earlier pass (frozen noise).
    Replay(&'a [LayerNoise]),
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    version: u64,
    layer_tags: Vec<u8>,
    /// `activations[l]` is the input to layer `l`; the last entry is the output.
    activations: Vec<Tensor>,
    pre_activations: Vec<Option<Tensor>>,
    effective_weights: Vec<Option<Tensor>>,
    noise: Vec<LayerNoise>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace has an output")
    }

    pub fn noise(&self) -> &[LayerNoise] {
        &self.noise
    }

    pub fn pre_activations(&self) -> &[Option<Tensor>] {
        &self.pre_activations
    }
}

/// Forward pass drawing fresh noise from `rng`.
pub fn forward(net: &Network, x: &Tensor, mode: Mode, rng: &mut RandomStream) -> Result<(Tensor, ForwardTrace)> {
    forward_with(net, x, mode, NoiseSource::Fresh(rng))
}

/// Forward pass without recording a trace.
pub fn predict(net: &Network, x: &Tensor, mode: Mode, rng: &mut RandomStream) -> Result<Tensor> {
    forward(net, x, mode, rng).map(|(y, _)| y)
}

pub fn forward_with(net: &Network, x: &Tensor, mode: Mode, mut source: NoiseSource<'_>) -> Result<(Tensor, ForwardTrace)> {
    if x.cols() != net.input_dim() {
        return Err(Error::shape_at(
            0,
            format!("input has {} columns, network expects {}", x.cols(), net.input_dim()),
        ));
    }
    if let NoiseSource::Replay(noise) = &source {
        if noise.len() != net.layers.len() {
            return Err(Error::Contract(format!(
                "replayed noise covers {} layers, network has {}",
                noise.len(),
                net.layers.len()
            )));
        }
    }
    let n_layers = net.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut effective_weights = Vec::with_capacity(n_layers);
    let mut noise = Vec::with_capacity(n_layers);
    activations.push(x.clone());

    for (i, layer) in net.layers.iter().enumerate() {
        let input = activations.last().expect("non-empty");
        let (out, pre, w_eff, drawn) = match layer {
            Layer::Dense(d) => {
                if input.cols() != d.fan_in() {
                    return Err(Error::shape_at(i, format!("input width {} vs fan_in {}", input.cols(), d.fan_in())));
                }
                let mut z = input.matmul(&d.weight)?;
                z.add_row_inplace(&d.bias)?;
                let a = d.activation.apply(&z);
                (a, Some(z), None, LayerNoise::None)
            }
            Layer::Noisy(n) => {
                if input.cols() != n.fan_in() {
                    return Err(Error::shape_at(i, format!("input width {} vs fan_in {}", input.cols(), n.fan_in())));
                }
                let eps = match &mut source {
                    NoiseSource::Fresh(rng) => noisy_forward(n, input, mode, rng).map(|(_, e)| e),
                    NoiseSource::Replay(noise) => match &noise[i] {
                        LayerNoise::Weight(e) => Ok(Some(e.clone())),
                        LayerNoise::None => Ok(None),
                        LayerNoise::Mask(_) => Err(Error::Contract(format!("layer {i}: replayed a dropout mask into a noisy layer"))),
                    },
                }
                .map_err(|e| at_layer(e, i))?;
                let w_eff = match &eps {
                    Some(e) => n.perturbed_weight(e)?,
                    None => n.weight.clone(),
                };
                let z = noisy_forward_with(n, input, eps.as_ref()).map_err(|e| at_layer(e, i))?;
                let a = n.activation.apply(&z);
                let drawn = eps.map(LayerNoise::Weight).unwrap_or(LayerNoise::None);
                (a, Some(z), Some(w_eff), drawn)
            }
            Layer::Dropout(d) => match &mut source {
                NoiseSource::Fresh(rng) => {
                    let (a, mask) = dropout_forward(d, input, mode, rng);
                    (a, None, None, mask.map(LayerNoise::Mask).unwrap_or(LayerNoise::None))
                }
                NoiseSource::Replay(noise) => match &noise[i] {
                    LayerNoise::Mask(m) => {
                        let a = input.zip_map(m, |a, m| a * m).map_err(|e| at_layer(e, i))?;
                        (a, None, None, LayerNoise::Mask(m.clone()))
                    }
                    LayerNoise::None => (input.clone(), None, None, LayerNoise::None),
                    LayerNoise::Weight(_) => {
                        return Err(Error::Contract(format!("layer {i}: replayed weight noise into a dropout layer")))
                    }
                },
            },
        };
        activations.push(out);
        pre_activations.push(pre);
        effective_weights.push(w_eff);
        noise.push(drawn);
    }

    let output = activations.last().expect("non-empty").clone();
    Ok((
        output,
        ForwardTrace {
            version: net.version,
            layer_tags: net.layers.iter().map(Layer::kind_tag).collect(),
            activations,
            pre_activations,
            effective_weights,
            noise,
        },
    ))
}

fn at_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::Shape { layer: None, msg } => Error::Shape { layer: Some(layer), msg },
        other => other,
    }
}

/// Per-layer gradients. Dropout layers carry none.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    entries: Vec<(ParamId, Tensor)>,
}

impl GradientSet {
    /// All-zero gradients matching the network's parameters.
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            entries: net
                .parameters()
                .into_iter()
                .map(|(id, t)| (id, Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ParamId, Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.entries.iter().find(|(i, _)| *i == id).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, id: ParamId) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(i, _)| *i == id).map(|(_, t)| t)
    }

    /// `self[id] += k * delta`.
    pub fn add_scaled(&mut self, id: ParamId, delta: &Tensor, k: f64) -> Result<()> {
        let g = self
            .get_mut(id)
            .ok_or_else(|| Error::Contract(format!("no gradient slot for {id:?}")))?;
        if !g.same_shape(delta) {
            return Err(Error::shape(format!("gradient {:?} += {:?}", g.shape(), delta.shape())));
        }
        for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact reverse pass over `trace`. Noise draws are held fixed.
pub fn backward(net: &Network, trace: &ForwardTrace, output_grad: &Tensor) -> Result<GradientSet> {
    if trace.version != net.version
        || trace.layer_tags.len() != net.layers.len()
        || trace.layer_tags.iter().zip(&net.layers).any(|(t, l)| *t != l.kind_tag())
    {
        return Err(Error::Contract(
            "trace was produced by a different network or before a parameter update".into(),
        ));
    }
    if !output_grad.same_shape(trace.output()) {
        return Err(Error::shape(format!(
            "output gradient {:?} vs output {:?}",
            output_grad.shape(),
            trace.output().shape()
        )));
    }

    let mut grads = GradientSet::zeros_like(net);
    let mut g = output_grad.clone();
    for (i, layer) in net.layers.iter().enumerate().rev() {
        let input = &trace.activations[i];
        let output = &trace.activations[i + 1];
        match layer {
            Layer::Dense(d) => {
                let z = trace.pre_activations[i].as_ref().expect("dense layer traced z");
                let gz = d.activation.backward(z, output, &g);
                let gw = input.matmul_tn(&gz)?;
                let gb = gz.sum_rows();
                grads.add_scaled(ParamId { layer: i, kind: ParamKind::Weight }, &gw, 1.0)?;
                grads.add_scaled(ParamId { layer: i, kind: ParamKind::Bias }, &gb, 1.0)?;
                g = gz.matmul_nt(&d.weight)?;
            }
            Layer::Noisy(n) => {
                let z = trace.pre_activations[i].as_ref().expect("noisy layer traced z");
                let w_eff = trace.effective_weights[i].as_ref().expect("noisy layer traced W~");
                let gz = n.activation.backward(z, output, &g);
                let gw = input.matmul_tn(&gz)?;
                let gb = gz.sum_rows();
                if n.spec.mode == NoiseMode::Learned {
                    let eps = match &trace.noise[i] {
                        LayerNoise::Weight(e) => Some(e),
                        _ => None,
                    };
                    let ga = alpha_gradient(&gw, eps, n.spec.granularity)?;
                    grads.add_scaled(ParamId { layer: i, kind: ParamKind::Alpha }, &ga, 1.0)?;
                }
                grads.add_scaled(ParamId { layer: i, kind: ParamKind::Weight }, &gw, 1.0)?;
                grads.add_scaled(ParamId { layer: i, kind: ParamKind::Bias }, &gb, 1.0)?;
                g = gz.matmul_nt(w_eff)?;
            }
            Layer::Dropout(_) => {
                if let LayerNoise::Mask(m) = &trace.noise[i] {
                    g = g.zip_map(m, |g, m| g * m)?;
                }
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests;
