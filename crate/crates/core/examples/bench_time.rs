//! Inference cost against the number of Monte Carlo passes.
//!
//!     cargo run --release --example bench_time

use mcni::cli::{run_bench_time, BenchTimeConfig};

fn main() -> mcni::Result<()> {
    let cfg = BenchTimeConfig {
        passes: vec![1, 10, 50],
        ..Default::default()
    };
    for r in run_bench_time(&cfg)? {
        println!(
            "{:<14} T={:<3} {:.4} s +- {:.4} (batch {}, {} reps)",
            r.model, r.passes, r.mean_seconds, r.std_seconds, r.batch_size, r.repetitions
        );
    }
    Ok(())
}
