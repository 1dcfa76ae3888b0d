//! Calibration and interval metrics on a trained classifier and regressor.
//!
//!     cargo run --release --example calibration_metrics

use mcni::data::{gen_toy, two_blobs};
use mcni::mc::{mc_predict, summarize_classification, summarize_regression};
use mcni::metrics::{brier, ece, mpiw, nll_gaussian, picp, rmse, DEFAULT_ECE_BINS, DEFAULT_SIGMA_FLOOR};
use mcni::nn::{build_network, Architecture, ModelKind, Task};
use mcni::optim::{fit, OptimizerKind, TrainConfig};
use mcni::RandomStream;

fn main() -> mcni::Result<()> {
    let train = two_blobs(400, 1.5, 0.6, 1)?;
    let test = two_blobs(400, 1.5, 0.6, 2)?;
    let labels = test.labels()?.to_vec();
    for (name, kind) in [("mc_dropout", ModelKind::McDropout { p: 0.3 }), ("mcni_fixed", ModelKind::mcni_fixed(0.3))] {
        let net = build_network(&Architecture::new(2, &[32, 32], 2), &kind, Task::Classification, &RandomStream::new(1))?;
        let net = fit(net, &train, None, &TrainConfig::new(OptimizerKind::adam(0.01), 40, 32, 1))?.network;
        let s = summarize_classification(&mc_predict(&net, &test.x, 100, &RandomStream::new(9))?)?;
        let correct: Vec<bool> = s.predicted.iter().zip(&labels).map(|(p, l)| p == l).collect();
        let acc = correct.iter().filter(|c| **c).count() as f64 / correct.len() as f64;
        println!(
            "{name:<11} acc {acc:.3}  ECE {:.4}  Brier {:.4}",
            ece(&s.confidence, &correct, DEFAULT_ECE_BINS)?,
            brier(&s.mean_probs, &labels)?
        );
    }

    let toy = gen_toy(200, 5)?;
    let net = build_network(&Architecture::new(1, &[100], 1), &ModelKind::mcni_fixed(0.05), Task::Regression, &RandomStream::new(5))?;
    let net = fit(net, &toy, None, &TrainConfig::new(OptimizerKind::adam(0.005), 300, 200, 5))?.network;
    let s = summarize_regression(&mc_predict(&net, &toy.x, 500, &RandomStream::new(6))?)?;
    let y = toy.regression_targets()?;
    let nll = nll_gaussian(y.data(), s.mean.data(), s.sigma.data(), DEFAULT_SIGMA_FLOOR)?;
    println!(
        "\ntoy regression: RMSE {:.4}  PICP {:.3}  MPIW {:.4}  mean NLL {:.4}",
        rmse(&s.mean, y)?,
        picp(y.data(), s.lower.data(), s.upper.data())?,
        mpiw(s.lower.data(), s.upper.data())?,
        nll.mean()
    );
    Ok(())
}
