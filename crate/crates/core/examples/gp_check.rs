//! Prior covariance of wide random networks against the infinite-width kernel.
//!
//!     cargo run --release --example gp_check

use mcni::cli::{run_gpcheck, GpCheckConfig};
use mcni::gp::{correspondence_report, CovarianceEstimator, KernelMcConfig, Nonlinearity, WideNetProbe};
use mcni::RandomStream;

fn main() -> mcni::Result<()> {
    let (rows, _) = run_gpcheck(&GpCheckConfig::default())?;
    println!("seed  width  max rel dev (MC kernel)  (closed form)");
    for r in &rows {
        println!(
            "{:<5} {:<6} {:<24.5} {:.5}",
            r.seed,
            r.width,
            r.max_rel_dev,
            r.max_rel_dev_analytic.unwrap_or(f64::NAN)
        );
    }

    // the two estimators on one tanh population
    let cfg = KernelMcConfig::new(200_000, Nonlinearity::Tanh, 1.0, 2);
    let probe = WideNetProbe {
        width: 1024,
        n_networks: 2000,
        probes: mcni::gp::default_probes(),
    };
    for est in [CovarianceEstimator::Sampled, CovarianceEstimator::Conditional] {
        let r = correspondence_report(&probe, &cfg, est, &RandomStream::new(3))?;
        println!("tanh, {est:?}: max rel dev {:.4}", r.max_rel_dev);
    }
    Ok(())
}
