//! Predictive entropy of a two-class MCNI classifier as test inputs get
//! noisier.
//!
//!     cargo run --release --example noise_sweep

use mcni::cli::{run_noise_sweep, SweepConfig};

fn main() -> mcni::Result<()> {
    let cfg = SweepConfig::default();
    let run = run_noise_sweep(&cfg)?;
    print!("sigma ");
    for r in &run.seeds {
        print!("  seed {:<4}", r.seed);
    }
    println!();
    for (i, sigma) in cfg.sigmas.iter().enumerate() {
        print!("{sigma:<5} ");
        for r in &run.seeds {
            print!("  {:.2e}", r.mean_entropy[i]);
        }
        println!();
    }
    println!("spearman of the seed-averaged entropy: {}", run.report.summary["spearman_of_seed_mean"]);
    Ok(())
}
