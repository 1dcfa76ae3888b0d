//! Train a small MCNI regressor with learned noise levels and early stopping.
//!
//!     cargo run --release --example train_basics

use mcni::data::{split, standardize_fit_apply, synthetic_regression, SplitSpec};
use mcni::nn::{build_network, Architecture, ModelKind, Task, WeightDecay};
use mcni::optim::{fit, OptimizerKind, TrainConfig};
use mcni::RandomStream;

fn main() -> mcni::Result<()> {
    let ds = synthetic_regression(600, 4, 7)?;
    let (train, val, _test) = split(&ds, &SplitSpec::new(0.8, 0.1, 0.1, 7))?;
    let (train, rest, _stats) = standardize_fit_apply(&train, &[&val])?;

    let arch = Architecture::new(4, &[50, 50], 1);
    let net = build_network(&arch, &ModelKind::mcni_learned(0.05), Task::Regression, &RandomStream::new(7))?;

    let mut cfg = TrainConfig::new(OptimizerKind::adam(0.002), 200, 32, 7);
    cfg.weight_decay = WeightDecay::uniform(1e-4);
    cfg.early_stop_patience = 5;
    let model = fit(net, &train, Some(&rest[0]), &cfg)?;

    for r in model.history.iter().step_by(10) {
        println!("epoch {:>3}  train {:.4}  val {:.4}", r.epoch, r.train_loss, r.val_loss.unwrap_or(f64::NAN));
    }
    println!(
        "best epoch {} (stopped early: {}), val loss {:.4}",
        model.best_epoch,
        model.stopped_early,
        model.best_val_loss().unwrap_or(f64::NAN)
    );
    for (i, l) in model.network.noisy_layers().enumerate() {
        println!("layer {i}: |alpha| = {:.4}, sigma_l = {:.4}", l.reported_alpha(), l.sigma());
    }
    Ok(())
}
