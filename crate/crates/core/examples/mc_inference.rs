//! Monte Carlo prediction for regression and classification.
//!
//!     cargo run --release --example mc_inference

use mcni::data::{gen_toy, two_blobs};
use mcni::mc::{mc_predict, summarize_classification, summarize_regression};
use mcni::nn::{build_network, Architecture, ModelKind, Task};
use mcni::optim::{fit, OptimizerKind, TrainConfig};
use mcni::{RandomStream, Tensor};

fn main() -> mcni::Result<()> {
    // regression: intervals are mean +- 3 predictive std
    let toy = gen_toy(200, 0)?;
    let net = build_network(&Architecture::new(1, &[100], 1), &ModelKind::mcni_fixed(0.05), Task::Regression, &RandomStream::new(0))?;
    let net = fit(net, &toy, None, &TrainConfig::new(OptimizerKind::adam(0.005), 300, 200, 0))?.network;
    let x = Tensor::matrix(5, 1, vec![-1.0, -0.5, 0.0, 0.5, 1.0])?;
    let s = summarize_regression(&mc_predict(&net, &x, 500, &RandomStream::new(1))?)?;
    println!("x      mean     sigma    interval");
    for i in 0..5 {
        println!(
            "{:>5.2}  {:>7.4}  {:.4}   [{:.3}, {:.3}]",
            x.data()[i],
            s.mean.data()[i],
            s.sigma.data()[i],
            s.lower.data()[i],
            s.upper.data()[i]
        );
    }

    let blobs = two_blobs(400, 2.0, 0.5, 3)?;
    let arch = Architecture::new(2, &[32, 32], 2);
    let clf = build_network(&arch, &ModelKind::mcni_fixed(0.1), Task::Classification, &RandomStream::new(3))?;
    let clf = fit(clf, &blobs, None, &TrainConfig::new(OptimizerKind::adam(0.01), 50, 32, 3))?.network;
    let probe = Tensor::from_rows(&[[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 3.0]])?;
    let c = summarize_classification(&mc_predict(&clf, &probe, 100, &RandomStream::new(4))?)?;
    println!("\npoint        class  confidence  entropy  class var");
    let var = c.mean_class_variance();
    for i in 0..probe.rows() {
        println!(
            "{:?}  {}      {:.4}      {:.4}   {:.2e}",
            probe.row(i),
            c.predicted[i],
            c.confidence[i],
            c.entropy[i],
            var[i]
        );
    }
    Ok(())
}
