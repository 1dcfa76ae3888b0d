use serde::{Deserialize, Serialize};

use super::{GradientSet, Layer, Network, ParamId, ParamKind};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean of squared differences over every batch element and output dim.
pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!(
            "mse of {:?} against {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("mse of an empty batch".into()));
    }
    let ss: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(ss / pred.len() as f64)
}

pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    let k = 2.0 / pred.len() as f64;
    pred.zip_map(target, |p, t| k * (p - t))
}

/// Softmax of each row, stabilized by subtracting the row max.
pub fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

fn check_labels(logits: &Tensor, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cross entropy of an empty batch".into()));
    }
    let c = logits.cols();
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
        return Err(Error::InvalidArgument(format!(
            "label {l} at row {i} is out of range for {c} classes"
        )));
    }
    Ok(())
}

/// Mean over the batch of `-log softmax(logits)[label]`, via log-sum-exp.
pub fn loss_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`loss_cross_entropy`] w.r.t. the logits.
pub fn cross_entropy_grad(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(logits, labels)?;
    let mut g = softmax_rows(logits);
    let n = labels.len() as f64;
    for (r, &label) in labels.iter().enumerate() {
        let row = g.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(g)
}

/// L2 coefficients. `weights` holds one lambda per dense layer (in order), or
/// a single value applied to every layer; `bias` applies to every bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightDecay {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl WeightDecay {
    pub fn none() -> Self {
        Self::uniform(0.0)
    }

    pub fn uniform(lambda: f64) -> Self {
        Self {
            weights: vec![lambda],
            bias: lambda,
        }
    }

    fn validate(&self, n_dense: usize) -> Result<()> {
        if self.weights.iter().chain([&self.bias]).any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight decay coefficients must be >= 0, got {self:?}"
            )));
        }
        if self.weights.len() != 1 && self.weights.len() != n_dense {
            return Err(Error::InvalidArgument(format!(
                "{} weight lambdas for {n_dense} dense layers",
                self.weights.len()
            )));
        }
        Ok(())
    }

    fn weight_lambda(&self, k: usize) -> f64 {
        if self.weights.len() == 1 {
            self.weights[0]
        } else {
            self.weights[k]
        }
    }
}

fn dense_params(net: &Network) -> Vec<(usize, &Tensor, &Tensor)> {
    net.layers()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l {
            Layer::Dense(d) => Some((i, &d.weight, &d.bias)),
            Layer::Noisy(n) => Some((i, &n.weight, &n.bias)),
            Layer::Dropout(_) => None,
        })
        .collect()
}

/// `sum_l lambda_l ||W_l||^2 + lambda_b sum_l ||b_l||^2`. Alpha is excluded.
pub fn l2_penalty(net: &Network, decay: &WeightDecay) -> Result<f64> {
    let params = dense_params(net);
    decay.validate(params.len())?;
    Ok(params
        .iter()
        .enumerate()
        .map(|(k, (_, w, b))| decay.weight_lambda(k) * w.sum_sq() + decay.bias * b.sum_sq())
        .sum())
}

/// Adds the gradient of [`l2_penalty`] into `grads`.
pub fn l2_penalty_grad(net: &Network, decay: &WeightDecay, grads: &mut GradientSet) -> Result<()> {
    let params = dense_params(net);
    decay.validate(params.len())?;
    for (k, (layer, w, b)) in params.into_iter().enumerate() {
        let lw = decay.weight_lambda(k);
        if lw != 0.0 {
            grads.add_scaled(ParamId { layer, kind: ParamKind::Weight }, w, 2.0 * lw)?;
        }
        if decay.bias != 0.0 {
            grads.add_scaled(ParamId { layer, kind: ParamKind::Bias }, b, 2.0 * decay.bias)?;
        }
    }
    Ok(())
}
