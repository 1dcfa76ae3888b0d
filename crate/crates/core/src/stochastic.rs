//! Weight-noise-injected dense layers and the dropout baseline.
//!
//! A noisy layer computes `x (W + alpha * eps) + b` with
//! `eps ~ N(0, sigma_l^2)` drawn once per forward pass and shared by every row
//! of the batch. `sigma_l` is the population standard deviation of the layer's
//! weights. The bias never receives noise. Noise is live in both `Train` and
//! `Eval` modes; only `Mode::Deterministic` switches it off.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Mode};
use crate::rng::RandomStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// `alpha` is a hyperparameter and is never updated.
    Fixed,
    /// `alpha` is trained by backpropagation alongside the weights.
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    PerLayerScalar,
    PerElement,
}

/// Where the base noise scale `sigma_l` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SigmaSource {
    /// Recomputed from the live weights on every forward pass.
    CurrentWeights,
    /// Frozen at the weights' value when the layer was built.
    InitWeights,
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub granularity: Granularity,
    pub alpha_init: f64,
    /// `lambda` of the `-lambda * ||alpha||^2` anti-collapse term.
    pub alpha_penalty_lambda: f64,
    pub sigma_source: SigmaSource,
}

impl NoiseSpec {
    pub fn fixed(alpha: f64) -> Self {
        Self {
            mode: NoiseMode::Fixed,
            granularity: Granularity::PerLayerScalar,
            alpha_init: alpha,
            alpha_penalty_lambda: 0.0,
            sigma_source: SigmaSource::CurrentWeights,
        }
    }

    pub fn learned(alpha_init: f64) -> Self {
        Self {
            mode: NoiseMode::Learned,
            ..Self::fixed(alpha_init)
        }
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn with_sigma_source(mut self, s: SigmaSource) -> Self {
        self.sigma_source = s;
        self
    }

    pub fn with_penalty(mut self, lambda: f64) -> Self {
        self.alpha_penalty_lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_init >= 0.0) || !self.alpha_init.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha_init must be a finite value >= 0, got {}",
                self.alpha_init
            )));
        }
        if !(self.alpha_penalty_lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha penalty lambda must be >= 0, got {}",
                self.alpha_penalty_lambda
            )));
        }
        if let SigmaSource::Constant(v) = self.sigma_source {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "constant sigma must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyDenseLayer {
    pub weight: Tensor,
    pub bias: Tensor,
    /// Shape `[1]` for per-layer scalars, or the weight's shape.
    pub alpha: Tensor,
    pub spec: NoiseSpec,
    pub activation: Activation,
    /// Weight std at construction, used by `SigmaSource::InitWeights`.
    pub init_sigma: f64,
}

impl NoisyDenseLayer {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation, spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        if weight.shape().len() != 2 || bias.len() != weight.cols() {
            return Err(Error::shape(format!(
                "noisy layer weight {:?} with bias {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        let alpha = match spec.granularity {
            Granularity::PerLayerScalar => Tensor::scalar(spec.alpha_init),
            Granularity::PerElement => Tensor::filled(weight.shape(), spec.alpha_init),
        };
        let init_sigma = population_std(weight.data());
        Ok(Self {
            weight,
            bias,
            alpha,
            spec,
            activation,
            init_sigma,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn sigma(&self) -> f64 {
        layer_weight_std(&self.weight, &self.spec, self.init_sigma)
    }

    /// `|alpha|`, averaged over elements for per-element granularity.
    pub fn reported_alpha(&self) -> f64 {
        self.alpha.data().iter().map(|a| a.abs()).sum::<f64>() / self.alpha.len() as f64
    }

    /// Effective perturbed weights `W + alpha * eps`.
    pub fn perturbed_weight(&self, eps: &Tensor) -> Result<Tensor> {
        if !eps.same_shape(&self.weight) {
            return Err(Error::shape(format!(
                "noise {:?} for weight {:?}",
                eps.shape(),
                self.weight.shape()
            )));
        }
        let w = self.weight.data();
        let e = eps.data();
        let data = match self.spec.granularity {
            Granularity::PerLayerScalar => {
                let a = self.alpha.data()[0];
                w.iter().zip(e).map(|(w, e)| w + a * e).collect()
            }
            Granularity::PerElement => w
                .iter()
                .zip(e)
                .zip(self.alpha.data())
                .map(|((w, e), a)| w + a * e)
                .collect(),
        };
        Tensor::new(self.weight.shape().to_vec(), data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutLayer {
    pub p: f64,
}

impl DropoutLayer {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        Ok(Self { p })
    }
}

/// Population standard deviation (divides by `n`). Empty input gives 0.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Base noise scale `sigma_l` of one layer.
pub fn layer_weight_std(weight: &Tensor, spec: &NoiseSpec, init_sigma: f64) -> f64 {
    match spec.sigma_source {
        SigmaSource::CurrentWeights => population_std(weight.data()),
        SigmaSource::InitWeights => init_sigma,
        SigmaSource::Constant(v) => v,
    }
}

/// One draw of `eps ~ N(0, sigma_l^2)` shaped like the layer's weights.
pub fn sample_noise(layer: &NoisyDenseLayer, rng: &mut RandomStream) -> Tensor {
    let sigma = layer.sigma();
    let n = layer.weight.len();
    let data = (0..n).map(|_| sigma * rng.standard_normal()).collect();
    Tensor::new(layer.weight.shape().to_vec(), data).expect("noise shaped like weight")
}

/// Pre-activation of a noisy layer and the noise it used.
///
/// Returns `None` for the noise in `Mode::Deterministic`.
pub fn noisy_forward(
    layer: &NoisyDenseLayer,
    x: &Tensor,
    mode: Mode,
    rng: &mut RandomStream,
) -> Result<(Tensor, Option<Tensor>)> {
    let eps = match mode {
        Mode::Deterministic => None,
        Mode::Train | Mode::Eval => Some(sample_noise(layer, rng)),
    };
    let z = noisy_forward_with(layer, x, eps.as_ref())?;
    Ok((z, eps))
}

/// Pre-activation with caller-supplied noise (`None` means noise-free).
pub fn noisy_forward_with(layer: &NoisyDenseLayer, x: &Tensor, eps: Option<&Tensor>) -> Result<Tensor> {
    if x.cols() != layer.fan_in() {
        return Err(Error::shape(format!(
            "input width {} for noisy layer with fan_in {}",
            x.cols(),
            layer.fan_in()
        )));
    }
    let mut z = match eps {
        Some(e) => x.matmul(&layer.perturbed_weight(e)?)?,
        None => x.matmul(&layer.weight)?,
    };
    z.add_row_inplace(&layer.bias)?;
    Ok(z)
}

/// `dL/dalpha` from `dL/dW~` by the reparameterization `dW~/dalpha = eps`.
pub fn alpha_gradient(
    upstream_weight_grad: &Tensor,
    eps: Option<&Tensor>,
    granularity: Granularity,
) -> Result<Tensor> {
    let eps = eps.ok_or_else(|| {
        Error::Contract("alpha gradient requested but no noise was cached for this pass".into())
    })?;
    let prod = upstream_weight_grad.zip_map(eps, |g, e| g * e)?;
    Ok(match granularity {
        Granularity::PerElement => prod,
        Granularity::PerLayerScalar => Tensor::scalar(prod.sum()),
    })
}

/// `-lambda * sum ||alpha||^2`. Negative on purpose: larger noise is rewarded.
pub fn alpha_penalty<'a>(alphas: impl IntoIterator<Item = &'a Tensor>, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    -lambda * alphas.into_iter().map(Tensor::sum_sq).sum::<f64>()
}

/// Gradient of [`alpha_penalty`] with respect to one alpha tensor.
pub fn alpha_penalty_grad(alpha: &Tensor, lambda: f64) -> Tensor {
    alpha.scale(-2.0 * lambda)
}

/// Inverted dropout: keep with probability `1 - p`, scale kept units by
/// `1 / (1 - p)`. Returns the output and the scaled mask (`None` when the
/// layer is an identity for this call).
pub fn dropout_forward(
    layer: &DropoutLayer,
    h: &Tensor,
    mode: Mode,
    rng: &mut RandomStream,
) -> (Tensor, Option<Tensor>) {
    if layer.p == 0.0 || mode == Mode::Deterministic {
        return (h.clone(), None);
    }
    let keep = 1.0 - layer.p;
    let scale = 1.0 / keep;
    let mask = h.map(|_| if rng.bernoulli(keep) { scale } else { 0.0 });
    let out = h.zip_map(&mask, |a, m| a * m).expect("mask shaped like input");
    (out, Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_1x1(w: f64, alpha: f64, spec: NoiseSpec) -> NoisyDenseLayer {
        let mut l = NoisyDenseLayer::new(
            Tensor::matrix(1, 1, vec![w]).unwrap(),
            Tensor::vector(vec![0.0]),
            Activation::Identity,
            spec,
        )
        .unwrap();
        l.alpha = Tensor::scalar(alpha);
        l
    }

    // two-pass loop oracle, kept separate from population_std
    fn std_oracle(w: &Tensor) -> f64 {
        let mut sum = 0.0;
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                sum += w.get(i, j);
            }
        }
        let mean = sum / w.len() as f64;
        let mut ss = 0.0;
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                let d = w.get(i, j) - mean;
                ss += d * d;
            }
        }
        (ss / w.len() as f64).sqrt()
    }

    #[test]
    fn weight_std_examples() {
        let spec = NoiseSpec::fixed(0.1);
        let ones = Tensor::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(layer_weight_std(&ones, &spec, 0.0), 0.0);
        let pm = Tensor::from_rows(&[[-1.0, 1.0]]).unwrap();
        assert_eq!(layer_weight_std(&pm, &spec, 0.0), 1.0);

        let mut rng = RandomStream::new(5);
        for _ in 0..20 {
            let w = Tensor::matrix(7, 4, (0..28).map(|_| rng.normal(0.3, 2.0)).collect()).unwrap();
            let got = layer_weight_std(&w, &spec, 0.0);
            assert!((got - std_oracle(&w)).abs() < 1e-12);
        }
    }

    #[test]
    fn sigma_sources() {
        let w = Tensor::from_rows(&[[-1.0, 1.0]]).unwrap();
        let mut l = NoisyDenseLayer::new(
            w,
            Tensor::vector(vec![0.0, 0.0]),
            Activation::Identity,
            NoiseSpec::fixed(1.0).with_sigma_source(SigmaSource::InitWeights),
        )
        .unwrap();
        l.weight = Tensor::from_rows(&[[-3.0, 3.0]]).unwrap();
        assert_eq!(l.sigma(), 1.0);
        l.spec.sigma_source = SigmaSource::CurrentWeights;
        assert_eq!(l.sigma(), 3.0);
        l.spec.sigma_source = SigmaSource::Constant(0.25);
        assert_eq!(l.sigma(), 0.25);
    }

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::fixed(-0.1).validate().is_err());
        assert!(NoiseSpec::fixed(0.1).with_penalty(-1.0).validate().is_err());
        assert!(NoiseSpec::fixed(0.1)
            .with_sigma_source(SigmaSource::Constant(0.0))
            .validate()
            .is_err());
        assert!(NoiseSpec::learned(0.0).validate().is_ok());
        assert!(DropoutLayer::new(1.0).is_err());
        assert!(DropoutLayer::new(0.0).is_ok());
    }

    #[test]
    fn zero_sigma_gives_exact_zero_noise() {
        let l = layer_1x1(3.0, 1.0, NoiseSpec::fixed(1.0));
        let mut rng = RandomStream::new(1);
        let z = sample_noise(&l, &mut rng);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_moments_large_sample() {
        let spec = NoiseSpec::fixed(1.0).with_sigma_source(SigmaSource::Constant(2.0));
        let l = NoisyDenseLayer::new(
            Tensor::zeros(&[1000, 1000]),
            Tensor::zeros(&[1000]),
            Activation::Identity,
            spec,
        )
        .unwrap();
        let mut rng = RandomStream::new(42);
        let z = sample_noise(&l, &mut rng);
        let n = z.len() as f64;
        let mean = z.sum() / n;
        let var = z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 4.0).abs() / 4.0 < 0.02, "var {var}");
    }

    #[test]
    fn noise_is_seed_deterministic() {
        let spec = NoiseSpec::fixed(1.0).with_sigma_source(SigmaSource::Constant(1.0));
        let l = layer_1x1(0.0, 1.0, spec);
        let a = sample_noise(&l, &mut RandomStream::new(9));
        let b = sample_noise(&l, &mut RandomStream::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_alpha_matches_plain_dense() {
        let mut rng = RandomStream::new(2);
        let w = Tensor::matrix(3, 2, (0..6).map(|_| rng.standard_normal()).collect()).unwrap();
        let b = Tensor::vector(vec![0.1, -0.2]);
        let x = Tensor::matrix(4, 3, (0..12).map(|_| rng.standard_normal()).collect()).unwrap();
        let l = NoisyDenseLayer::new(w.clone(), b.clone(), Activation::Identity, NoiseSpec::fixed(0.0)).unwrap();
        let (z, eps) = noisy_forward(&l, &x, Mode::Eval, &mut rng).unwrap();
        assert!(eps.is_some());
        let mut plain = x.matmul(&w).unwrap();
        plain.add_row_inplace(&b).unwrap();
        assert_eq!(z, plain);
    }

    #[test]
    fn constant_weight_layer_has_no_noise() {
        let l = layer_1x1(0.0, 1.0, NoiseSpec::fixed(1.0));
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let mut rng = RandomStream::new(3);
        for _ in 0..10 {
            let (z, _) = noisy_forward(&l, &x, Mode::Train, &mut rng).unwrap();
            assert_eq!(z.data()[0], 0.0);
        }
    }

    #[test]
    fn output_variance_is_alpha_sq_sigma_sq() {
        let spec = NoiseSpec::fixed(2.0).with_sigma_source(SigmaSource::Constant(1.0));
        let l = layer_1x1(0.0, 2.0, spec);
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let mut rng = RandomStream::new(4);
        let n = 100_000;
        let ys: Vec<f64> = (0..n)
            .map(|_| noisy_forward(&l, &x, Mode::Eval, &mut rng).unwrap().0.data()[0])
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((var - 4.0).abs() / 4.0 < 0.05, "var {var}");
    }

    #[test]
    fn deterministic_mode_skips_noise() {
        let spec = NoiseSpec::fixed(2.0).with_sigma_source(SigmaSource::Constant(1.0));
        let l = layer_1x1(0.5, 2.0, spec);
        let x = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let mut rng = RandomStream::new(4);
        let (z, eps) = noisy_forward(&l, &x, Mode::Deterministic, &mut rng).unwrap();
        assert!(eps.is_none());
        assert_eq!(z.data()[0], 0.5);
    }

    #[test]
    fn consecutive_passes_draw_fresh_noise() {
        let spec = NoiseSpec::fixed(1.0).with_sigma_source(SigmaSource::Constant(1.0));
        let l = layer_1x1(0.0, 1.0, spec);
        let mut rng = RandomStream::new(8);
        let a = sample_noise(&l, &mut rng);
        let b = sample_noise(&l, &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn alpha_gradient_examples() {
        let g = Tensor::filled(&[2, 3], 1.0);
        let e = Tensor::filled(&[2, 3], 0.3);
        let ga = alpha_gradient(&g, Some(&e), Granularity::PerElement).unwrap();
        assert!(ga.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let gs = alpha_gradient(&g, Some(&e), Granularity::PerLayerScalar).unwrap();
        assert!((gs.data()[0] - 1.8).abs() < 1e-12);

        let zero = Tensor::zeros(&[2, 3]);
        let gz = alpha_gradient(&g, Some(&zero), Granularity::PerElement).unwrap();
        assert!(gz.data().iter().all(|&v| v == 0.0));

        assert!(matches!(
            alpha_gradient(&g, None, Granularity::PerElement),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn alpha_gradient_matches_finite_difference() {
        // L(alpha) = sum(c * (W + alpha * eps)) with eps frozen.
        let mut rng = RandomStream::new(12);
        let w = Tensor::matrix(3, 2, (0..6).map(|_| rng.standard_normal()).collect()).unwrap();
        let c = Tensor::matrix(3, 2, (0..6).map(|_| rng.standard_normal()).collect()).unwrap();
        let mut l = NoisyDenseLayer::new(
            w,
            Tensor::zeros(&[2]),
            Activation::Identity,
            NoiseSpec::learned(0.4).with_granularity(Granularity::PerElement),
        )
        .unwrap();
        let eps = sample_noise(&l, &mut rng);
        let loss = |l: &NoisyDenseLayer| -> f64 {
            let wt = l.perturbed_weight(&eps).unwrap();
            wt.data().iter().zip(c.data()).map(|(a, b)| (a * b).sin()).sum()
        };
        let wt = l.perturbed_weight(&eps).unwrap();
        let upstream = wt.zip_map(&c, |a, b| b * (a * b).cos()).unwrap();
        let ga = alpha_gradient(&upstream, Some(&eps), Granularity::PerElement).unwrap();
        let h = 1e-6;
        for k in 0..l.alpha.len() {
            let orig = l.alpha.data()[k];
            l.alpha.data_mut()[k] = orig + h;
            let lp = loss(&l);
            l.alpha.data_mut()[k] = orig - h;
            let lm = loss(&l);
            l.alpha.data_mut()[k] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - ga.data()[k]).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-4, "k={k} fd={fd} an={}", ga.data()[k]);
        }
    }

    #[test]
    fn alpha_penalty_examples() {
        let a = Tensor::vector(vec![1.0, -1.0]);
        assert_eq!(alpha_penalty([&a], 0.0), 0.0);
        assert_eq!(alpha_penalty([&a], 0.5), -1.0);

        let a = Tensor::vector(vec![0.3, -0.7, 1.1]);
        let lambda = 0.25;
        let g = alpha_penalty_grad(&a, lambda);
        let h = 1e-6;
        for k in 0..a.len() {
            let mut p = a.clone();
            p.data_mut()[k] += h;
            let mut m = a.clone();
            m.data_mut()[k] -= h;
            let fd = (alpha_penalty([&p], lambda) - alpha_penalty([&m], lambda)) / (2.0 * h);
            assert!((fd - g.data()[k]).abs() / g.data()[k].abs() < 1e-6);
        }
    }

    #[test]
    fn dropout_identity_and_expectation() {
        let h = Tensor::from_rows(&[[1.0, -2.0, 3.0]]).unwrap();
        let mut rng = RandomStream::new(0);
        let (out, mask) = dropout_forward(&DropoutLayer::new(0.0).unwrap(), &h, Mode::Train, &mut rng);
        assert_eq!(out, h);
        assert!(mask.is_none());

        let d = DropoutLayer::new(0.5).unwrap();
        let n = 100_000;
        let mut acc = [0.0; 3];
        for _ in 0..n {
            let (o, _) = dropout_forward(&d, &h, Mode::Eval, &mut rng);
            for (a, v) in acc.iter_mut().zip(o.data()) {
                *a += v;
            }
        }
        for (a, x) in acc.iter().zip(h.data()) {
            let m = a / n as f64;
            assert!((m - x).abs() / x.abs() < 0.02, "mean {m} vs {x}");
        }

        let (a, _) = dropout_forward(&d, &h, Mode::Train, &mut RandomStream::new(77));
        let (b, _) = dropout_forward(&d, &h, Mode::Train, &mut RandomStream::new(77));
        assert_eq!(a, b);
    }
}
