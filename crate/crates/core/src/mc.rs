//! T-pass Monte Carlo inference and predictive summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict, softmax_rows, Mode, Network, Task};
use crate::rng::{labels, RandomStream};
use crate::tensor::Tensor;

/// Default pass count for regression and the toy problem.
pub const DEFAULT_PASSES_REGRESSION: usize = 500;
/// Default pass count for classification.
pub const DEFAULT_PASSES_CLASSIFICATION: usize = 100;

const ROW_SUM_TOL: f64 = 1e-9;

/// Per-pass outputs of a stochastic network. For classification each pass
/// holds softmax probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSamples {
    passes: Vec<Tensor>,
    /// Key of the stream that drove each pass.
    pub pass_keys: Vec<u64>,
    pub task: Task,
}

impl PredictiveSamples {
    /// Wraps precomputed passes (each `N x D`).
    pub fn new(passes: Vec<Tensor>, task: Task) -> Result<Self> {
        let Some(first) = passes.first() else {
            return Err(Error::InvalidArgument("at least one pass is required".into()));
        };
        for (t, p) in passes.iter().enumerate() {
            if p.shape() != first.shape() || p.shape().len() != 2 {
                return Err(Error::shape(format!(
                    "pass {t} has shape {:?}, expected {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
        }
        if task == Task::Classification {
            check_rows_normalized(&passes, ROW_SUM_TOL)?;
        }
        let pass_keys = vec![0; passes.len()];
        Ok(Self { passes, pass_keys, task })
    }

    pub fn passes(&self) -> &[Tensor] {
        &self.passes
    }

    pub fn n_passes(&self) -> usize {
        self.passes.len()
    }

    pub fn n_points(&self) -> usize {
        self.passes[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.passes[0].cols()
    }

    /// Value of pass `t`, point `i`, output `d`.
    pub fn value(&self, t: usize, i: usize, d: usize) -> f64 {
        self.passes[t].get(i, d)
    }

    /// Long-format CSV: `pass,point,dim,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pass,point,dim,value\n");
        for (t, p) in self.passes.iter().enumerate() {
            for i in 0..p.rows() {
                for d in 0..p.cols() {
                    s.push_str(&format!("{t},{i},{d},{:?}\n", p.get(i, d)));
                }
            }
        }
        s
    }
}

fn check_rows_normalized(passes: &[Tensor], tol: f64) -> Result<()> {
    for (t, p) in passes.iter().enumerate() {
        for i in 0..p.rows() {
            let row = p.row(i);
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol || row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "pass {t} row {i} is not a probability vector (sum {s})"
                )));
            }
        }
    }
    Ok(())
}

/// Runs `t` stochastic passes in eval mode. Pass `k` uses the sub-stream
/// `rng.derive2(MC_PASSES, k)`, so passes may run in any order.
pub fn mc_predict(net: &Network, x: &Tensor, t: usize, rng: &RandomStream) -> Result<PredictiveSamples> {
    if t < 1 {
        return Err(Error::InvalidArgument("pass count must be >= 1".into()));
    }
    let streams: Vec<RandomStream> = (0..t as u64).map(|k| rng.derive2(labels::MC_PASSES, k)).collect();
    let pass_keys = streams.iter().map(|s| s.key()).collect();
    let passes = streams
        .into_par_iter()
        .map(|mut s| {
            let out = predict(net, x, Mode::Eval, &mut s)?;
            Ok(match net.task() {
                Task::Regression => out,
                Task::Classification => softmax_rows(&out),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if passes.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("non-finite network output during MC inference".into()));
    }
    Ok(PredictiveSamples {
        passes,
        pass_keys,
        task: net.task(),
    })
}

/// Predictive mean, unbiased variance and the `mean +- 3 sigma` interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: Tensor,
    pub variance: Tensor,
    pub sigma: Tensor,
    pub lower: Tensor,
    pub upper: Tensor,
}

impl PredictiveSummary {
    /// One row per point; columns `mean,variance,lower,upper` (suffixed by
    /// output index when `D > 1`).
    pub fn to_csv(&self) -> String {
        let d = self.mean.cols();
        let names = ["mean", "variance", "lower", "upper"];
        let header: Vec<String> = if d == 1 {
            names.iter().map(|s| s.to_string()).collect()
        } else {
            (0..d).flat_map(|j| names.iter().map(move |s| format!("{s}_{j}"))).collect()
        };
        let mut s = header.join(",");
        s.push('\n');
        for i in 0..self.mean.rows() {
            let mut cells = Vec::with_capacity(4 * d);
            for j in 0..d {
                for t in [&self.mean, &self.variance, &self.lower, &self.upper] {
                    cells.push(format!("{:?}", t.get(i, j)));
                }
            }
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

// Moments of the per-pass values shifted by the first pass, so identical
// passes give an exact mean and exactly zero variance.
fn moments(samples: &PredictiveSamples) -> (Tensor, Tensor) {
    let t = samples.n_passes() as f64;
    let base = &samples.passes[0];
    let mut s1 = Tensor::zeros(base.shape());
    let mut s2 = Tensor::zeros(base.shape());
    for p in &samples.passes[1..] {
        for (((a, b), v), c) in s1.data_mut().iter_mut().zip(s2.data_mut().iter_mut()).zip(p.data()).zip(base.data()) {
            let d = v - c;
            *a += d;
            *b += d * d;
        }
    }
    let mean = base.zip_map(&s1, |c, a| c + a / t).expect("same shape");
    let var = if samples.n_passes() > 1 {
        s1.zip_map(&s2, |a, b| ((b - a * a / t) / (t - 1.0)).max(0.0)).expect("same shape")
    } else {
        Tensor::zeros(base.shape())
    };
    (mean, var)
}

pub fn summarize_regression(samples: &PredictiveSamples) -> Result<PredictiveSummary> {
    if samples.n_passes() < 2 {
        return Err(Error::InvalidArgument("variance needs at least 2 passes".into()));
    }
    let (mean, variance) = moments(samples);
    let sigma = variance.map(f64::sqrt);
    let lower = mean.zip_map(&sigma, |m, s| m - 3.0 * s)?;
    let upper = mean.zip_map(&sigma, |m, s| m + 3.0 * s)?;
    Ok(PredictiveSummary {
        mean,
        variance,
        sigma,
        lower,
        upper,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub mean_probs: Tensor,
    pub predicted: Vec<usize>,
    pub confidence: Vec<f64>,
    pub entropy: Vec<f64>,
    /// Per-class variance of the probabilities across passes (unbiased; zero
    /// for a single pass).
    pub class_variance: Tensor,
}

impl ClassificationSummary {
    /// Default selective-prediction score: `1 - confidence`.
    pub fn uncertainty(&self) -> Vec<f64> {
        self.confidence.iter().map(|c| 1.0 - c).collect()
    }

    /// Mean over classes of the per-class variance.
    pub fn mean_class_variance(&self) -> Vec<f64> {
        let c = self.class_variance.cols() as f64;
        (0..self.class_variance.rows())
            .map(|i| self.class_variance.row(i).iter().sum::<f64>() / c)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let c = self.mean_probs.cols();
        let mut s = String::from("predicted,confidence,entropy");
        for k in 0..c {
            s.push_str(&format!(",p_{k}"));
        }
        s.push('\n');
        for i in 0..self.mean_probs.rows() {
            s.push_str(&format!("{},{:?},{:?}", self.predicted[i], self.confidence[i], self.entropy[i]));
            for v in self.mean_probs.row(i) {
                s.push_str(&format!(",{v:?}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn summarize_classification(samples: &PredictiveSamples) -> Result<ClassificationSummary> {
    check_rows_normalized(&samples.passes, ROW_SUM_TOL)?;
    let (mean_probs, class_variance) = moments(samples);
    let n = mean_probs.rows();
    let mut predicted = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    let mut entropy = Vec::with_capacity(n);
    for i in 0..n {
        let row = mean_probs.row(i);
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        predicted.push(best);
        confidence.push(row[best]);
        entropy.push(-row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>());
    }
    Ok(ClassificationSummary {
        mean_probs,
        predicted,
        confidence,
        entropy,
        class_variance,
    })
}
