//! Grid search all four model families on a regression CSV and compare test
//! RMSE and MSLL. Defaults to the bundled synthetic fixture with a small grid.
//!
//!     cargo run --release --example regression_benchmark [data.csv]

use std::path::PathBuf;

use mcni::cli::{load_benchmark_data, run_benchmark, BenchmarkConfig};
use mcni::optim::GridSpec;

fn main() -> mcni::Result<()> {
    let mut cfg = BenchmarkConfig::default();
    cfg.data.path = Some(
        std::env::args()
            .nth(1)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_regression.csv")),
    );
    cfg.grid = GridSpec {
        learning_rates: vec![0.001, 0.002],
        weight_decays: vec![1e-4, 1e-9],
        dropout_ps: vec![0.01, 0.05],
        fixed_alphas: vec![0.01, 0.05],
        learned_alpha_inits: vec![0.01],
    };
    let (ds, _) = load_benchmark_data(&cfg)?;
    let run = run_benchmark(&cfg, &ds)?;
    println!("family          lr      wd       param   RMSE     NLL/pt    MSLL");
    for r in &run.results {
        let m = &r.metrics;
        println!(
            "{:<15} {:<7} {:<8.0e} {:<7} {:.4}   {:>8.3}  {:>10.3}",
            m.model,
            r.best.lr,
            r.best.weight_decay,
            r.best.param.map(|p| p.to_string()).unwrap_or("-".into()),
            m.get("test_rmse").unwrap_or(f64::NAN),
            m.get("test_nll_mean").unwrap_or(f64::NAN),
            m.get("msll").unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
