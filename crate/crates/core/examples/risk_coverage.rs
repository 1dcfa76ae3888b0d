//! Selective prediction: how RMSE falls as the least certain test points are
//! rejected.
//!
//!     cargo run --release --example risk_coverage

use mcni::data::{split, standardize_fit_apply, synthetic_regression, SplitSpec};
use mcni::mc::{mc_predict, summarize_regression};
use mcni::metrics::{default_coverage_grid, risk_coverage, spearman, squared_errors, RiskInputs};
use mcni::nn::{build_network, Architecture, ModelKind, Task};
use mcni::optim::{fit, OptimizerKind, TrainConfig};
use mcni::RandomStream;

fn main() -> mcni::Result<()> {
    let ds = synthetic_regression(800, 4, 11)?;
    let (train, _, test) = split(&ds, &SplitSpec::new(0.7, 0.0, 0.3, 11))?;
    let (train, rest, _) = standardize_fit_apply(&train, &[&test])?;
    let test = &rest[0];

    let net = build_network(&Architecture::new(4, &[50, 50], 1), &ModelKind::mcni_fixed(0.1), Task::Regression, &RandomStream::new(11))?;
    let net = fit(net, &train, None, &TrainConfig::new(OptimizerKind::adam(0.002), 60, 32, 11))?.network;
    let s = summarize_regression(&mc_predict(&net, &test.x, 200, &RandomStream::new(12))?)?;
    let se = squared_errors(&s.mean, test.regression_targets()?)?;

    let curve = risk_coverage(s.sigma.data(), RiskInputs::SquaredErrors(&se), &default_coverage_grid())?;
    print!("{}", curve.to_csv());
    println!("# spearman(sigma, |error|) = {:.3}", spearman(s.sigma.data(), &se)?);
    Ok(())
}
