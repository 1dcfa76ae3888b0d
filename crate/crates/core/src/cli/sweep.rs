use std::path::Path;

use rayon::prelude::*;

use super::config::SweepConfig;
use super::{mean, read_input, ArtifactWriter, MetricRow, Report, RunManifest};
use crate::data::{two_blobs, Dataset};
use crate::error::{Error, Result};
use crate::mc::{mc_predict, summarize_classification, ClassificationSummary};
use crate::metrics::spearman;
use crate::nn::{build_network, network_from_json, network_to_json, Network, Task};
use crate::optim::fit;
use crate::rng::{labels, RandomStream};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SweepSeedRun {
    pub seed: u64,
    pub network: Network,
    /// Whether `network` was trained by this run rather than loaded.
    pub trained_here: bool,
    pub test: Dataset,
    /// One summary per configured sigma.
    pub summaries: Vec<ClassificationSummary>,
    pub mean_entropy: Vec<f64>,
    pub spearman: f64,
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub seeds: Vec<SweepSeedRun>,
    pub report: Report,
}

fn load_model(cfg: &SweepConfig) -> Result<Option<(Network, Vec<u8>)>> {
    let Some(path) = &cfg.model_path else { return Ok(None) };
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Data(format!("{} is not UTF-8", path.display())))?;
    let net = network_from_json(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if net.epochs_trained == 0 {
        return Err(Error::Config(format!("{} holds an untrained model", path.display())));
    }
    if net.task() != Task::Classification || net.input_dim() != 2 {
        return Err(Error::Data(format!(
            "{} must be a classifier over 2 inputs, got {:?} over {}",
            path.display(),
            net.task(),
            net.input_dim()
        )));
    }
    Ok(Some((net, bytes)))
}

fn run_seed(cfg: &SweepConfig, seed: u64, loaded: Option<&Network>) -> Result<SweepSeedRun> {
    let root = RandomStream::new(seed);
    let (network, trained_here) = match loaded {
        Some(n) => (n.clone(), false),
        None => {
            let train = two_blobs(cfg.n_train, cfg.separation, cfg.spread, seed)?;
            let net = build_network(
                &cfg.model.architecture(2, 2),
                &cfg.model.kind(cfg.family, None),
                Task::Classification,
                &root.derive(labels::INIT),
            )?;
            (fit(net, &train, None, &cfg.train.train_config(train.len(), seed))?.network, true)
        }
    };
    let test_seed = root.derive2(labels::DATA, 1).next_u64();
    let test = two_blobs(cfg.n_points, cfg.separation, cfg.spread, test_seed)?;

    // one draw of z shared by every sigma, and one MC stream shared too, so
    // the levels differ only in the corruption scale
    let mut zr = root.derive(labels::CORRUPT);
    let z: Vec<f64> = (0..test.x.len()).map(|_| zr.standard_normal()).collect();
    let mc = root.derive(labels::MC_PASSES);
    let mut summaries = Vec::with_capacity(cfg.sigmas.len());
    let mut mean_entropy = Vec::with_capacity(cfg.sigmas.len());
    for &sigma in &cfg.sigmas {
        let xs: Vec<f64> = test.x.data().iter().zip(&z).map(|(x, z)| x + sigma * z).collect();
        let x = Tensor::matrix(test.x.rows(), test.x.cols(), xs)?;
        let s = summarize_classification(&mc_predict(&network, &x, cfg.passes, &mc)?)?;
        mean_entropy.push(mean(&s.entropy).unwrap_or(0.0));
        summaries.push(s);
    }
    let spearman = spearman(&cfg.sigmas, &mean_entropy)?;
    Ok(SweepSeedRun {
        seed,
        network,
        trained_here,
        test,
        summaries,
        mean_entropy,
        spearman,
    })
}

/// Corrupts held-out two-blob points with increasing Gaussian noise and
/// tracks the predictive entropy at each level.
pub fn run_noise_sweep(cfg: &SweepConfig) -> Result<SweepRun> {
    cfg.validate()?;
    let loaded = load_model(cfg)?;
    run_with(cfg, loaded.as_ref().map(|(n, _)| n))
}

fn run_with(cfg: &SweepConfig, loaded: Option<&Network>) -> Result<SweepRun> {
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, loaded))
        .collect::<Result<Vec<_>>>()?;

    let mut report = Report::new("noise-sweep");
    for r in &seeds {
        let mut row = MetricRow::new(Some(r.seed), cfg.family.label());
        for (sigma, h) in cfg.sigmas.iter().zip(&r.mean_entropy) {
            row.set(&format!("mean_entropy_sigma_{sigma}"), *h);
        }
        row.set("spearman", r.spearman);
        report.rows.push(row);
    }
    let averaged: Vec<f64> = (0..cfg.sigmas.len())
        .map(|i| seeds.iter().map(|r| r.mean_entropy[i]).sum::<f64>() / seeds.len() as f64)
        .collect();
    report.summary.insert("sigmas".into(), serde_json::to_value(&cfg.sigmas)?);
    report.summary.insert("mean_entropy".into(), serde_json::to_value(&averaged)?);
    report
        .summary
        .insert("spearman_of_seed_mean".into(), spearman(&cfg.sigmas, &averaged)?.into());
    let per_seed: Vec<f64> = seeds.iter().map(|r| r.spearman).collect();
    report.summary.insert("spearman_mean".into(), serde_json::to_value(mean(&per_seed))?);
    report.summary.insert("passes".into(), cfg.passes.into());
    Ok(SweepRun { seeds, report })
}

/// Writes `sweep.csv`, `metrics.json`, the trained models and the manifest.
pub fn cmd_noise_sweep(cfg: &SweepConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let loaded = load_model(cfg)?;
    let mut w = ArtifactWriter::new(out, "noise-sweep", cfg)?;
    if let (Some(path), Some((_, bytes))) = (&cfg.model_path, &loaded) {
        w.add_input(path, bytes);
    }
    let t0 = std::time::Instant::now();
    let run = run_with(cfg, loaded.as_ref().map(|(n, _)| n))?;
    w.time("sweep", t0.elapsed().as_secs_f64());

    let mut csv = String::from("seed,sigma,point,predicted,confidence,entropy,p_0,p_1\n");
    for r in &run.seeds {
        for (sigma, s) in cfg.sigmas.iter().zip(&r.summaries) {
            for i in 0..s.predicted.len() {
                let p = s.mean_probs.row(i);
                csv.push_str(&format!(
                    "{},{sigma:?},{i},{},{:?},{:?},{:?},{:?}\n",
                    r.seed, s.predicted[i], s.confidence[i], s.entropy[i], p[0], p[1]
                ));
            }
        }
        if r.trained_here {
            w.write(&format!("model_seed{}.json", r.seed), network_to_json(&r.network)?)?;
        }
    }
    w.write("sweep.csv", csv)?;
    w.write_json("metrics.json", &run.report)?;
    w.finish(serde_json::to_value(&run.report.summary)?)
}
