use std::path::Path;

use serde::Serialize;

use super::config::GpCheckConfig;
use super::{mean, ArtifactWriter, MetricRow, Report, RunManifest};
use crate::error::Result;
use crate::gp::{analytic_kernel, kernel_matrix_mc, max_rel_deviation, wide_net_covariance, KernelMcConfig, WideNetProbe};
use crate::rng::{labels, RandomStream};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GpCheckRow {
    pub seed: u64,
    pub width: usize,
    pub n_networks: usize,
    /// Against the Monte Carlo kernel.
    pub max_rel_dev: f64,
    /// Against the closed form, when the nonlinearity has one.
    pub max_rel_dev_analytic: Option<f64>,
}

fn kernel_cfg(cfg: &GpCheckConfig) -> KernelMcConfig {
    KernelMcConfig::new(cfg.kernel_samples, cfg.nonlinearity, cfg.bias_std, cfg.input_dim())
}

/// Empirical prior covariance of single-hidden-layer networks at each width
/// against the infinite-width kernel, per seed.
pub fn run_gpcheck(cfg: &GpCheckConfig) -> Result<(Vec<GpCheckRow>, Report)> {
    cfg.validate()?;
    let kc = kernel_cfg(cfg);
    kc.validate()?;
    let analytic: Option<Vec<Vec<f64>>> = cfg
        .probes
        .iter()
        .map(|x| cfg.probes.iter().map(|y| analytic_kernel(x, y, cfg.nonlinearity, cfg.bias_std)).collect())
        .collect();
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let root = RandomStream::new(seed);
        let kernel = kernel_matrix_mc(&cfg.probes, &kc, &mut root.derive(labels::KERNEL))?;
        for &width in &cfg.widths {
            let probe = WideNetProbe {
                width,
                n_networks: cfg.n_networks,
                probes: cfg.probes.clone(),
            };
            let cov = wide_net_covariance(&probe, &kc, cfg.estimator, &root.derive(width as u64))?;
            rows.push(GpCheckRow {
                seed,
                width,
                n_networks: cfg.n_networks,
                max_rel_dev: max_rel_deviation(&cov, &kernel),
                max_rel_dev_analytic: analytic.as_ref().map(|k| max_rel_deviation(&cov, k)),
            });
        }
    }

    let mut report = Report::new("gpcheck");
    for r in &rows {
        let mut m = MetricRow::new(Some(r.seed), &format!("width_{}", r.width));
        m.set("max_rel_dev", r.max_rel_dev).set("max_rel_dev_analytic", r.max_rel_dev_analytic);
        report.rows.push(m);
    }
    let lo = *cfg.widths.iter().min().expect("validated");
    let hi = *cfg.widths.iter().max().expect("validated");
    let dev = |seed: u64, w: usize| rows.iter().find(|r| r.seed == seed && r.width == w).map(|r| r.max_rel_dev);
    let improved = cfg.seeds.iter().filter(|&&s| dev(s, hi) < dev(s, lo)).count();
    report.summary.insert("seeds_improving_with_width".into(), improved.into());
    report.summary.insert("n_seeds".into(), cfg.seeds.len().into());
    for &w in &cfg.widths {
        let v: Vec<f64> = rows.iter().filter(|r| r.width == w).map(|r| r.max_rel_dev).collect();
        report
            .summary
            .insert(format!("max_rel_dev_mean_width_{w}"), serde_json::to_value(mean(&v))?);
    }
    if analytic.is_none() {
        report.notes.push("no closed-form kernel for this nonlinearity; compared against Monte Carlo only".into());
    }
    Ok((rows, report))
}

/// Writes `convergence.csv`, `metrics.json` and the manifest.
pub fn cmd_gpcheck(cfg: &GpCheckConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut w = ArtifactWriter::new(out, "gpcheck", cfg)?;
    let t0 = std::time::Instant::now();
    let (rows, report) = run_gpcheck(cfg)?;
    w.time("gpcheck", t0.elapsed().as_secs_f64());
    let mut csv = String::from("width,n_networks,max_rel_dev,max_rel_dev_analytic,seed\n");
    for r in &rows {
        let a = r.max_rel_dev_analytic.map(|v| format!("{v:?}")).unwrap_or_default();
        csv.push_str(&format!("{},{},{:?},{a},{}\n", r.width, r.n_networks, r.max_rel_dev, r.seed));
    }
    w.write("convergence.csv", csv)?;
    w.write_json("metrics.json", &report)?;
    w.finish(serde_json::to_value(&report.summary)?)
}
