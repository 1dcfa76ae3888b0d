//! Training: the regularized loss, optimizers, early-stopped `fit`, and
//! exhaustive grid search.

mod grid;
mod optimizer;

pub use grid::{grid_search, leaderboard_csv, CellOutcome, Family, GridPoint, GridResult, GridSpec, LeaderboardRow};
pub use optimizer::{adam_step, sgd_momentum_step, AdamState, Optimizer, OptimizerKind};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::nn::{
    backward, cross_entropy_grad, forward, l2_penalty, l2_penalty_grad, loss_cross_entropy,
    loss_mse, mse_grad, predict, softmax_rows, GradientSet, Layer, Mode, Network, ParamId,
    ParamKind, Task, WeightDecay,
};
use crate::rng::{labels, RandomStream};
use crate::stochastic::{alpha_penalty, alpha_penalty_grad, NoiseMode};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub weight_decay: WeightDecay,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Stochastic passes averaged for each validation loss.
    pub val_passes: usize,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerKind, max_epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            optimizer,
            weight_decay: WeightDecay::none(),
            max_epochs,
            batch_size,
            early_stop_patience: 0,
            seed,
            val_passes: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.max_epochs == 0 || self.batch_size == 0 || self.val_passes == 0 {
            return Err(Error::InvalidArgument(format!(
                "max_epochs, batch_size and val_passes must be positive: {self:?}"
            )));
        }
        if self.weight_decay.weights.iter().chain([&self.weight_decay.bias]).any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidArgument("weight decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Task loss and its gradient w.r.t. the network output.
pub fn task_loss(output: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    match targets {
        Targets::Regression(y) => Ok((loss_mse(output, y)?, mse_grad(output, y)?)),
        Targets::Classification { labels, .. } => {
            Ok((loss_cross_entropy(output, labels)?, cross_entropy_grad(output, labels)?))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub data: f64,
    pub l2: f64,
    pub alpha: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.data + self.l2 + self.alpha
    }
}

/// Data loss + L2 on weights and biases + the anti-collapse alpha term of
/// learned-noise layers, with one fresh noise draw per layer. Returns the
/// parts and the gradient of their sum.
pub fn training_loss(
    net: &Network,
    x: &Tensor,
    targets: &Targets,
    decay: &WeightDecay,
    rng: &mut RandomStream,
) -> Result<(LossParts, GradientSet)> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let (out, trace) = forward(net, x, Mode::Train, rng)?;
    let (data, g_out) = task_loss(&out, targets)?;
    let mut grads = backward(net, &trace, &g_out)?;
    let l2 = l2_penalty(net, decay)?;
    l2_penalty_grad(net, decay, &mut grads)?;
    let mut alpha = 0.0;
    for (i, layer) in net.layers().iter().enumerate() {
        if let Layer::Noisy(n) = layer {
            let lambda = n.spec.alpha_penalty_lambda;
            if n.spec.mode == NoiseMode::Learned && lambda > 0.0 {
                alpha += alpha_penalty([&n.alpha], lambda);
                grads.add_scaled(ParamId { layer: i, kind: ParamKind::Alpha }, &alpha_penalty_grad(&n.alpha, lambda), 1.0)?;
            }
        }
    }
    Ok((LossParts { data, l2, alpha }, grads))
}

/// Loss of the `passes`-averaged prediction: MSE for regression, mean
/// negative log of the averaged class probability for classification.
pub fn validation_loss(net: &Network, val: &Dataset, passes: usize, rng: &mut RandomStream) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let mut acc: Option<Tensor> = None;
    for _ in 0..passes.max(1) {
        let mut out = predict(net, &val.x, Mode::Eval, rng)?;
        if net.task() == Task::Classification {
            out = softmax_rows(&out);
        }
        acc = Some(match acc {
            None => out,
            Some(a) => a.add(&out)?,
        });
    }
    let mean = acc.expect("at least one pass").scale(1.0 / passes.max(1) as f64);
    match &val.targets {
        Targets::Regression(y) => loss_mse(&mean, y),
        Targets::Classification { labels, .. } => {
            let n = labels.len() as f64;
            Ok(labels
                .iter()
                .enumerate()
                .map(|(r, &l)| -mean.get(r, l).max(f64::MIN_POSITIVE).ln())
                .sum::<f64>()
                / n)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    /// Snapshot from the best validation epoch (or the last epoch when no
    /// validation set was given).
    pub network: Network,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the returned snapshot.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainedModel {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.history.get(self.best_epoch.wrapping_sub(1)).and_then(|r| r.val_loss)
    }
}

/// Mini-batch training with per-epoch reshuffling and early stopping on the
/// validation loss (single stochastic pass unless `val_passes > 1`).
pub fn fit(net: Network, train: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainedModel> {
    if let Some(v) = val {
        if v.is_empty() {
            return Err(Error::Data("validation set is empty".into()));
        }
    }
    let root = RandomStream::new(cfg.seed);
    let mut vrng = root.derive(labels::VALIDATION);
    match val {
        Some(v) => fit_with_validator(net, train, cfg, |n, _| validation_loss(n, v, cfg.val_passes, &mut vrng)),
        None => fit_inner(net, train, cfg, None::<fn(&Network, usize) -> Result<f64>>),
    }
}

/// [`fit`] with a caller-supplied validation loss (epoch numbers are 1-based).
pub fn fit_with_validator(
    net: Network,
    train: &Dataset,
    cfg: &TrainConfig,
    validator: impl FnMut(&Network, usize) -> Result<f64>,
) -> Result<TrainedModel> {
    fit_inner(net, train, cfg, Some(validator))
}

fn fit_inner<V>(mut net: Network, train: &Dataset, cfg: &TrainConfig, mut validator: Option<V>) -> Result<TrainedModel>
where
    V: FnMut(&Network, usize) -> Result<f64>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if train.task() != net.task() {
        return Err(Error::InvalidArgument("dataset task does not match network task".into()));
    }
    let root = RandomStream::new(cfg.seed);
    let shuffle_root = root.derive(labels::SHUFFLE);
    let noise_root = root.derive(labels::NOISE);
    let mut opt = Optimizer::new(cfg.optimizer)?;

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let n = train.len();

    for epoch in 1..=cfg.max_epochs {
        let order = shuffle_root.derive(epoch as u64).permutation(n);
        let mut noise = noise_root.derive(epoch as u64);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = train.x.select_rows(chunk);
            let yb = train.targets.select(chunk);
            let (parts, grads) = training_loss(&net, &xb, &yb, &cfg.weight_decay, &mut noise)?;
            let loss = parts.total();
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training loss became {loss} at epoch {epoch}")));
            }
            opt.step(&mut net, &grads)?;
            total += loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;

        let val_loss = match validator.as_mut() {
            Some(v) => Some(v(&net, epoch)?),
            None => None,
        };
        history.push(EpochRecord { epoch, train_loss, val_loss });

        if let Some(vl) = val_loss {
            let improved = best.as_ref().map_or(true, |(b, _, _)| vl < *b);
            if improved {
                best = Some((vl, epoch, net.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let (mut network, best_epoch) = match best {
        Some((_, e, snap)) => (snap, e),
        None => {
            let e = history.len();
            (net, e)
        }
    };
    network.epochs_trained = best_epoch;
    Ok(TrainedModel {
        network,
        history,
        best_epoch,
        stopped_early,
    })
}
