//! Wide-network / Gaussian-process correspondence checks.
//!
//! A single-hidden-layer network with `W1 ~ N(0, I)`, hidden bias
//! `b ~ N(0, s^2)` and output weights `~ N(0, 1/width)` has, over the prior,
//! output covariance `K(x, y) = E[f(w'x + b) f(w'y + b)]`. This module
//! estimates `K` by Monte Carlo and compares it to the empirical covariance
//! of sampled networks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{labels, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Relu,
    Tanh,
    Identity,
}

impl Nonlinearity {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Nonlinearity::Relu => z.max(0.0),
            Nonlinearity::Tanh => z.tanh(),
            Nonlinearity::Identity => z,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMcConfig {
    /// Number of `(w, b)` draws.
    pub n_samples: usize,
    pub nonlinearity: Nonlinearity,
    /// Standard deviation `s` of the hidden bias.
    pub bias_std: f64,
    pub input_dim: usize,
}

impl KernelMcConfig {
    pub fn new(n_samples: usize, nonlinearity: Nonlinearity, bias_std: f64, input_dim: usize) -> Self {
        Self {
            n_samples,
            nonlinearity,
            bias_std,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("kernel sample count must be >= 1".into()));
        }
        if !(self.bias_std >= 0.0) || !self.bias_std.is_finite() {
            return Err(Error::InvalidArgument(format!("bias std must be >= 0, got {}", self.bias_std)));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
        }
        Ok(())
    }

    fn check_inputs(&self, xs: &[&[f64]]) -> Result<()> {
        self.validate()?;
        for x in xs {
            if x.len() != self.input_dim {
                return Err(Error::shape(format!(
                    "probe of length {} for input dimension {}",
                    x.len(),
                    self.input_dim
                )));
            }
        }
        Ok(())
    }
}

fn draw_unit(rng: &mut RandomStream, q: usize, bias_std: f64, w: &mut [f64]) -> f64 {
    for v in w.iter_mut().take(q) {
        *v = rng.standard_normal();
    }
    bias_std * rng.standard_normal()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Monte Carlo estimate of `K(x, y)`; `x` and `y` share every draw, so the
/// estimate is exactly symmetric.
pub fn kernel_mc(x: &[f64], y: &[f64], cfg: &KernelMcConfig, rng: &mut RandomStream) -> Result<f64> {
    let m = kernel_matrix_mc(&[x.to_vec(), y.to_vec()], cfg, rng)?;
    Ok(m[0][1])
}

/// Monte Carlo kernel matrix over `probes` with shared draws.
pub fn kernel_matrix_mc(probes: &[Vec<f64>], cfg: &KernelMcConfig, rng: &mut RandomStream) -> Result<Vec<Vec<f64>>> {
    let refs: Vec<&[f64]> = probes.iter().map(|p| p.as_slice()).collect();
    cfg.check_inputs(&refs)?;
    let p = probes.len();
    let mut acc = vec![vec![0.0; p]; p];
    let mut w = vec![0.0; cfg.input_dim];
    let mut h = vec![0.0; p];
    for _ in 0..cfg.n_samples {
        let b = draw_unit(rng, cfg.input_dim, cfg.bias_std, &mut w);
        for (hi, x) in h.iter_mut().zip(probes) {
            *hi = cfg.nonlinearity.apply(dot(&w, x) + b);
        }
        accumulate_outer(&mut acc, &h, 1.0);
    }
    let k = cfg.n_samples as f64;
    Ok(symmetric_scaled(acc, 1.0 / k))
}

// upper triangle only; mirrored by `symmetric_scaled`
fn accumulate_outer(acc: &mut [Vec<f64>], h: &[f64], scale: f64) {
    for i in 0..h.len() {
        for j in i..h.len() {
            acc[i][j] += scale * h[i] * h[j];
        }
    }
}

fn symmetric_scaled(mut m: Vec<Vec<f64>>, k: f64) -> Vec<Vec<f64>> {
    for i in 0..m.len() {
        for j in i..m.len() {
            let v = m[i][j] * k;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Closed-form kernel where one exists: `x'y + s^2` for the identity and
/// the first-order arc-cosine kernel for ReLU.
pub fn analytic_kernel(x: &[f64], y: &[f64], nonlinearity: Nonlinearity, bias_std: f64) -> Option<f64> {
    let s2 = bias_std * bias_std;
    let xy = dot(x, y) + s2;
    match nonlinearity {
        Nonlinearity::Identity => Some(xy),
        Nonlinearity::Relu => {
            let nx = (dot(x, x) + s2).sqrt();
            let ny = (dot(y, y) + s2).sqrt();
            if nx == 0.0 || ny == 0.0 {
                return Some(0.0);
            }
            let cos = (xy / (nx * ny)).clamp(-1.0, 1.0);
            let theta = cos.acos();
            Some(nx * ny * (theta.sin() + (std::f64::consts::PI - theta) * cos) / (2.0 * std::f64::consts::PI))
        }
        Nonlinearity::Tanh => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WideNetProbe {
    pub width: usize,
    pub n_networks: usize,
    pub probes: Vec<Vec<f64>>,
}

impl WideNetProbe {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.n_networks == 0 {
            return Err(Error::InvalidArgument("width and n_networks must be >= 1".into()));
        }
        if self.probes.len() < 2 {
            return Err(Error::InvalidArgument("at least two probe inputs are required".into()));
        }
        Ok(())
    }
}

/// Probe inputs used by default (two dimensions, no near-zero kernel entry
/// for the default bias).
pub fn default_probes() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-0.5, 0.5]]
}

/// How the output covariance of a sampled network population is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceEstimator {
    /// Draw output weights too and take the sample covariance of the outputs.
    Sampled,
    /// Integrate the output weights out: each network contributes its
    /// conditional covariance `(1/width) sum_j h_j(x) h_j(y)`.
    #[default]
    Conditional,
}

/// Output covariance over `probe.probes` of networks drawn from the prior.
/// Network `n` uses the stream `rng.derive2(PRIOR_NETS, n)`.
pub fn wide_net_covariance(
    probe: &WideNetProbe,
    cfg: &KernelMcConfig,
    estimator: CovarianceEstimator,
    rng: &RandomStream,
) -> Result<Vec<Vec<f64>>> {
    probe.validate()?;
    let refs: Vec<&[f64]> = probe.probes.iter().map(|p| p.as_slice()).collect();
    cfg.check_inputs(&refs)?;
    let p = probe.probes.len();
    let width = probe.width;

    let per_net: Vec<Vec<f64>> = (0..probe.n_networks as u64)
        .into_par_iter()
        .map(|n| {
            let mut r = rng.derive2(labels::PRIOR_NETS, n);
            let mut w = vec![0.0; cfg.input_dim];
            let mut h = vec![0.0; p];
            match estimator {
                CovarianceEstimator::Sampled => {
                    let mut out = vec![0.0; p];
                    let v_std = (1.0 / width as f64).sqrt();
                    for _ in 0..width {
                        let b = draw_unit(&mut r, cfg.input_dim, cfg.bias_std, &mut w);
                        let v = v_std * r.standard_normal();
                        for (o, x) in out.iter_mut().zip(&probe.probes) {
                            *o += v * cfg.nonlinearity.apply(dot(&w, x) + b);
                        }
                    }
                    out
                }
                CovarianceEstimator::Conditional => {
                    let mut acc = vec![vec![0.0; p]; p];
                    for _ in 0..width {
                        let b = draw_unit(&mut r, cfg.input_dim, cfg.bias_std, &mut w);
                        for (hi, x) in h.iter_mut().zip(&probe.probes) {
                            *hi = cfg.nonlinearity.apply(dot(&w, x) + b);
                        }
                        accumulate_outer(&mut acc, &h, 1.0);
                    }
                    // flatten the upper triangle
                    let mut flat = Vec::with_capacity(p * (p + 1) / 2);
                    for (i, row) in acc.iter().enumerate() {
                        flat.extend(row[i..].iter().map(|v| v / width as f64));
                    }
                    flat
                }
            }
        })
        .collect();

    let n = probe.n_networks as f64;
    match estimator {
        CovarianceEstimator::Sampled => {
            let mut mean = vec![0.0; p];
            for out in &per_net {
                for (m, o) in mean.iter_mut().zip(out) {
                    *m += o / n;
                }
            }
            let mut acc = vec![vec![0.0; p]; p];
            let mut centered = vec![0.0; p];
            for out in &per_net {
                for ((c, o), m) in centered.iter_mut().zip(out).zip(&mean) {
                    *c = o - m;
                }
                accumulate_outer(&mut acc, &centered, 1.0);
            }
            let denom = if probe.n_networks > 1 { n - 1.0 } else { 1.0 };
            Ok(symmetric_scaled(acc, 1.0 / denom))
        }
        CovarianceEstimator::Conditional => {
            let mut acc = vec![vec![0.0; p]; p];
            for flat in &per_net {
                let mut k = 0;
                for i in 0..p {
                    for j in i..p {
                        acc[i][j] += flat[k];
                        k += 1;
                    }
                }
            }
            Ok(symmetric_scaled(acc, 1.0 / n))
        }
    }
}

/// Largest element-wise `|a - b| / (|b| + 1e-9)`.
pub fn max_rel_deviation(a: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(reference.iter().flatten())
        .map(|(x, k)| (x - k).abs() / (k.abs() + 1e-9))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub covariance: Vec<Vec<f64>>,
    /// Monte Carlo kernel on the same probes.
    pub kernel: Vec<Vec<f64>>,
    pub max_rel_dev: f64,
    /// Deviation from the closed-form kernel, when one exists.
    pub max_rel_dev_analytic: Option<f64>,
}

/// Compares a wide-network population with the Monte Carlo kernel. The
/// kernel uses the stream `rng.derive(KERNEL)`; the networks use `rng`.
pub fn correspondence_report(
    probe: &WideNetProbe,
    cfg: &KernelMcConfig,
    estimator: CovarianceEstimator,
    rng: &RandomStream,
) -> Result<CorrespondenceReport> {
    let covariance = wide_net_covariance(probe, cfg, estimator, rng)?;
    let kernel = kernel_matrix_mc(&probe.probes, cfg, &mut rng.derive(labels::KERNEL))?;
    let max_rel_dev = max_rel_deviation(&covariance, &kernel);
    let analytic: Option<Vec<Vec<f64>>> = probe
        .probes
        .iter()
        .map(|x| {
            probe
                .probes
                .iter()
                .map(|y| analytic_kernel(x, y, cfg.nonlinearity, cfg.bias_std))
                .collect()
        })
        .collect();
    Ok(CorrespondenceReport {
        max_rel_dev_analytic: analytic.map(|k| max_rel_deviation(&covariance, &k)),
        covariance,
        kernel,
        max_rel_dev,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub width: usize,
    pub n_networks: usize,
    pub max_rel_dev: f64,
    pub seed: u64,
}

/// One report per `(seed, width)`; widths share the kernel of their seed.
pub fn convergence_table(
    widths: &[usize],
    n_networks: usize,
    probes: &[Vec<f64>],
    cfg: &KernelMcConfig,
    estimator: CovarianceEstimator,
    seeds: &[u64],
) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let root = RandomStream::new(seed);
        let kernel = kernel_matrix_mc(probes, cfg, &mut root.derive(labels::KERNEL))?;
        for &width in widths {
            let probe = WideNetProbe {
                width,
                n_networks,
                probes: probes.to_vec(),
            };
            let cov = wide_net_covariance(&probe, cfg, estimator, &root.derive(width as u64))?;
            rows.push(ConvergenceRow {
                width,
                n_networks,
                max_rel_dev: max_rel_deviation(&cov, &kernel),
                seed,
            });
        }
    }
    Ok(rows)
}

/// `width,n_networks,max_rel_dev,seed`.
pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("width,n_networks,max_rel_dev,seed\n");
    for r in rows {
        s.push_str(&format!("{},{},{:?},{}\n", r.width, r.n_networks, r.max_rel_dev, r.seed));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_cfg(k: usize, s: f64) -> KernelMcConfig {
        KernelMcConfig::new(k, Nonlinearity::Relu, s, 2)
    }

    #[test]
    fn relu_at_origin_without_bias_is_zero() {
        let v = kernel_mc(&[0.0, 0.0], &[0.0, 0.0], &relu_cfg(1000, 0.0), &mut RandomStream::new(1)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn relu_half_gaussian_moment() {
        let v = kernel_mc(&[0.0, 0.0], &[0.0, 0.0], &relu_cfg(1_000_000, 1.0), &mut RandomStream::new(2)).unwrap();
        assert!((v - 0.5).abs() < 0.005, "{v}");
    }

    #[test]
    fn kernel_is_symmetric_with_shared_draws() {
        let cfg = relu_cfg(5000, 1.0);
        let (x, y) = ([0.3, -1.2], [2.0, 0.4]);
        let a = kernel_mc(&x, &y, &cfg, &mut RandomStream::new(3)).unwrap();
        let b = kernel_mc(&y, &x, &cfg, &mut RandomStream::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(kernel_mc(&[1.0], &x, &cfg, &mut RandomStream::new(3)).is_err());
    }

    #[test]
    fn mc_kernel_matches_closed_form() {
        for nl in [Nonlinearity::Relu, Nonlinearity::Identity] {
            let cfg = KernelMcConfig::new(400_000, nl, 1.0, 2);
            let probes = default_probes();
            let m = kernel_matrix_mc(&probes, &cfg, &mut RandomStream::new(4)).unwrap();
            for (i, x) in probes.iter().enumerate() {
                for (j, y) in probes.iter().enumerate() {
                    let k = analytic_kernel(x, y, nl, 1.0).unwrap();
                    assert!((m[i][j] - k).abs() < 0.02 * k.abs().max(0.2), "{nl:?} {i} {j}");
                }
            }
        }
    }

    #[test]
    fn relu_closed_form_half_moment() {
        // x = 0, s = 1 reduces to E[relu(b)^2] = 1/2
        assert!((analytic_kernel(&[0.0], &[0.0], Nonlinearity::Relu, 1.0).unwrap() - 0.5).abs() < 1e-15);
        // collinear inputs, no bias: |x||y| / 2
        let v = analytic_kernel(&[2.0, 0.0], &[3.0, 0.0], Nonlinearity::Relu, 0.0).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn standard_error_halves_when_samples_quadruple() {
        let spread = |k: usize| {
            let vals: Vec<f64> = (0..20)
                .map(|r| kernel_mc(&[1.0, 0.5], &[0.2, -0.3], &relu_cfg(k, 1.0), &mut RandomStream::new(100 + r)).unwrap())
                .collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 19.0).sqrt()
        };
        let ratio = spread(2000) / spread(8000);
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    // cyclic Jacobi eigenvalues of a small symmetric matrix
    fn eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn kernel_matrix_is_symmetric_psd() {
        let mut r = RandomStream::new(5);
        for nl in [Nonlinearity::Relu, Nonlinearity::Tanh, Nonlinearity::Identity] {
            let probes: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| r.normal(0.0, 1.0)).collect()).collect();
            let m = kernel_matrix_mc(&probes, &KernelMcConfig::new(3000, nl, 0.7, 3), &mut r.derive(1)).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
            let scale = m.iter().map(|row| row.iter().fold(0.0f64, |a, v| a.max(v.abs()))).fold(0.0, f64::max);
            let ev = eigenvalues(m.iter().map(|row| row.iter().map(|v| v / scale).collect()).collect());
            assert!(ev.iter().all(|e| *e > -1e-8), "{nl:?} {ev:?}");
        }
    }

    #[test]
    fn width_one_identity_covariance() {
        let probe = WideNetProbe {
            width: 1,
            n_networks: 100_000,
            probes: vec![vec![1.0], vec![2.0], vec![-1.5]],
        };
        let cfg = KernelMcConfig::new(1, Nonlinearity::Identity, 0.0, 1);
        let c = wide_net_covariance(&probe, &cfg, CovarianceEstimator::Sampled, &RandomStream::new(6)).unwrap();
        for (i, x) in probe.probes.iter().enumerate() {
            for (j, y) in probe.probes.iter().enumerate() {
                let k = x[0] * y[0];
                assert!((c[i][j] - k).abs() < 0.03 * k.abs(), "{i} {j} {} vs {k}", c[i][j]);
                assert_eq!(c[i][j], c[j][i]);
            }
            assert!(c[i][i] >= 0.0);
        }
    }

    #[test]
    fn identity_wide_net_matches_linear_kernel() {
        let probe = WideNetProbe {
            width: 4096,
            n_networks: 2000,
            probes: default_probes(),
        };
        let cfg = KernelMcConfig::new(100_000, Nonlinearity::Identity, 1.0, 2);
        for est in [CovarianceEstimator::Conditional, CovarianceEstimator::Sampled] {
            let rep = correspondence_report(&probe, &cfg, est, &RandomStream::new(7)).unwrap();
            let tol = if est == CovarianceEstimator::Conditional { 0.03 } else { 0.15 };
            assert!(rep.max_rel_dev_analytic.unwrap() < tol, "{est:?} {rep:?}");
        }
    }

    #[test]
    fn degenerate_probes_give_zero_deviation() {
        let probe = WideNetProbe {
            width: 8,
            n_networks: 10,
            probes: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        let rep = correspondence_report(&probe, &relu_cfg(100, 0.0), CovarianceEstimator::Conditional, &RandomStream::new(8)).unwrap();
        assert_eq!(rep.max_rel_dev, 0.0);
        assert!(rep.covariance.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn covariance_is_seed_deterministic() {
        let probe = WideNetProbe {
            width: 32,
            n_networks: 50,
            probes: default_probes(),
        };
        let cfg = relu_cfg(10, 1.0);
        for est in [CovarianceEstimator::Conditional, CovarianceEstimator::Sampled] {
            let a = wide_net_covariance(&probe, &cfg, est, &RandomStream::new(9)).unwrap();
            let b = wide_net_covariance(&probe, &cfg, est, &RandomStream::new(9)).unwrap();
            assert_eq!(a, b);
        }
        let bad = WideNetProbe { probes: vec![vec![1.0, 0.0]], ..probe };
        assert!(wide_net_covariance(&bad, &cfg, CovarianceEstimator::Sampled, &RandomStream::new(9)).is_err());
    }

    #[test]
    fn convergence_csv_layout() {
        let rows = convergence_table(&[4, 16], 5, &default_probes(), &relu_cfg(1000, 1.0), CovarianceEstimator::Conditional, &[1, 2]).unwrap();
        assert_eq!(rows.len(), 4);
        let csv = convergence_csv(&rows);
        assert!(csv.starts_with("width,n_networks,max_rel_dev,seed\n4,5,"));
    }
}
