use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::BenchTimeConfig;
use super::{ArtifactWriter, RunManifest};
use crate::error::Result;
use crate::mc::{mc_predict, summarize_classification};
use crate::nn::{build_network, Task};
use crate::optim::Family;
use crate::rng::{labels, RandomStream};
use crate::tensor::Tensor;

/// Wall-clock cost of one batch prediction with `passes` MC passes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub model: String,
    pub passes: usize,
    pub repetitions: usize,
    pub batch_size: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// Times `mc_predict` plus summarizing on a random batch for every family
/// and pass count. A deterministic network is timed at one pass only.
pub fn run_bench_time(cfg: &BenchTimeConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed);
    let mut xr = root.derive(labels::DATA);
    let x = Tensor::matrix(
        cfg.batch_size,
        cfg.input_dim,
        (0..cfg.batch_size * cfg.input_dim).map(|_| xr.standard_normal()).collect(),
    )?;
    let mut rows = Vec::new();
    for &family in &cfg.families {
        let net = build_network(
            &cfg.model.architecture(cfg.input_dim, cfg.output_dim),
            &cfg.model.kind(family, None),
            Task::Classification,
            &root.derive(labels::INIT),
        )?;
        let passes: Vec<usize> = if family == Family::Deterministic { vec![1] } else { cfg.passes.clone() };
        for t in passes {
            let mc = root.derive(labels::MC_PASSES);
            let once = || -> Result<f64> {
                let t0 = Instant::now();
                let s = summarize_classification(&mc_predict(&net, &x, t, &mc)?)?;
                std::hint::black_box(s);
                Ok(t0.elapsed().as_secs_f64())
            };
            once()?; // warm-up
            let times = (0..cfg.repetitions).map(|_| once()).collect::<Result<Vec<f64>>>()?;
            let n = times.len() as f64;
            let m = times.iter().sum::<f64>() / n;
            let var = times.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
            rows.push(TimingRow {
                model: family.label().to_string(),
                passes: t,
                repetitions: cfg.repetitions,
                batch_size: cfg.batch_size,
                mean_seconds: m,
                std_seconds: var.sqrt(),
            });
        }
    }
    Ok(rows)
}

/// Writes `timing.csv` (seconds to 4 decimals) and the manifest.
pub fn cmd_bench_time(cfg: &BenchTimeConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut w = ArtifactWriter::new(out, "bench-time", cfg)?;
    let rows = run_bench_time(cfg)?;
    let mut csv = String::from("model,passes,repetitions,batch_size,mean_seconds,std_seconds\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.4},{:.4}\n",
            r.model, r.passes, r.repetitions, r.batch_size, r.mean_seconds, r.std_seconds
        ));
        w.time(&format!("{}_T{}", r.model, r.passes), r.mean_seconds);
    }
    w.write("timing.csv", csv)?;
    let n = rows.len();
    w.finish(serde_json::json!({ "rows": n }))
}
