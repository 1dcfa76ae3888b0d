use std::path::Path;

use rayon::prelude::*;

use super::config::{ToyConfig, ToyInputPlacement};
use super::{mean, ArtifactWriter, MetricRow, Report, RunManifest};
use crate::data::{gen_toy_with, Dataset, ToyInputs};
use crate::error::Result;
use crate::mc::{mc_predict, summarize_regression, PredictiveSummary};
use crate::metrics::{mpiw, picp, rmse};
use crate::nn::{build_network, Layer, Network, Task};
use crate::optim::{fit, Family};
use crate::rng::{labels, RandomStream};

/// One trained model on one seed.
#[derive(Clone, Debug)]
pub struct ToyModelRun {
    pub seed: u64,
    pub family: Family,
    pub data: Dataset,
    pub network: Network,
    pub mean: Vec<f64>,
    /// `None` when fewer than two passes were requested.
    pub summary: Option<PredictiveSummary>,
    pub metrics: MetricRow,
}

#[derive(Clone, Debug)]
pub struct ToyRun {
    pub runs: Vec<ToyModelRun>,
    pub report: Report,
}

fn run_one(cfg: &ToyConfig, seed: u64, family: Family) -> Result<ToyModelRun> {
    let inputs = match cfg.inputs {
        ToyInputPlacement::Grid => ToyInputs::Grid,
        ToyInputPlacement::Random => ToyInputs::Random,
    };
    let data = gen_toy_with(cfg.n_points, seed, inputs)?;
    let root = RandomStream::new(seed);
    let net = build_network(&cfg.model.architecture(1, 1), &cfg.model.kind(family, None), Task::Regression, &root.derive(labels::INIT))?;
    let trained = fit(net, &data, None, &cfg.train.train_config(data.len(), seed))?;
    let network = trained.network;

    let samples = mc_predict(&network, &data.x, cfg.passes, &root.derive(labels::MC_PASSES))?;
    let mut metrics = MetricRow::new(Some(seed), family.label());
    let y = data.regression_targets()?;
    let (mean, summary) = if cfg.passes >= 2 {
        let s = summarize_regression(&samples)?;
        metrics
            .set("picp", picp(y.data(), s.lower.data(), s.upper.data())?)
            .set("mpiw", mpiw(s.lower.data(), s.upper.data())?);
        (s.mean.data().to_vec(), Some(s))
    } else {
        metrics.set("picp", None).set("mpiw", None);
        (samples.passes()[0].data().to_vec(), None)
    };
    let mean_t = crate::tensor::Tensor::matrix(mean.len(), 1, mean.clone())?;
    metrics.set("rmse", rmse(&mean_t, y)?);
    metrics.set("final_train_loss", trained.history.last().map(|r| r.train_loss));
    if family == Family::McniLearned {
        let alphas: Vec<f64> = network
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Noisy(n) => Some(n.reported_alpha()),
                _ => None,
            })
            .collect();
        metrics.set("alpha_mean", super::mean(&alphas));
    }
    Ok(ToyModelRun {
        seed,
        family,
        data,
        network,
        mean,
        summary,
        metrics,
    })
}

/// Trains every configured model on every seed's toy set and evaluates the
/// `mean +- 3 sigma` intervals on the training inputs.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    cfg.validate()?;
    let jobs: Vec<(u64, Family)> = cfg.seeds.iter().flat_map(|&s| cfg.models.iter().map(move |&f| (s, f))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, f)| run_one(cfg, s, f))
        .collect::<Result<Vec<_>>>()?;

    let mut report = Report::new("toy");
    report.rows = runs.iter().map(|r| r.metrics.clone()).collect();
    if cfg.passes < 2 {
        report
            .notes
            .push("variance unavailable: at least 2 passes are needed for intervals, picp and mpiw".into());
    }
    report.summary.insert("passes".into(), cfg.passes.into());
    report.summary.insert("variance_available".into(), (cfg.passes >= 2).into());
    for &f in &cfg.models {
        for m in ["picp", "mpiw", "rmse"] {
            let vals: Vec<f64> = report.rows_for(f.label()).filter_map(|r| r.get(m)).collect();
            report
                .summary
                .insert(format!("{}_{m}_mean", f.label()), serde_json::to_value(mean(&vals))?);
        }
    }
    // comparison behind the main toy claim
    if cfg.models.contains(&Family::McniFixed) && cfg.models.contains(&Family::McDropout) && cfg.passes >= 2 {
        let mut wins = 0;
        for &s in &cfg.seeds {
            let get = |f: Family, m: &str| {
                report
                    .rows
                    .iter()
                    .find(|r| r.seed == Some(s) && r.model == f.label())
                    .and_then(|r| r.get(m))
            };
            if let (Some(wn), Some(wd), Some(pn), Some(pd)) = (
                get(Family::McniFixed, "mpiw"),
                get(Family::McDropout, "mpiw"),
                get(Family::McniFixed, "picp"),
                get(Family::McDropout, "picp"),
            ) {
                if wn < wd && pn >= pd {
                    wins += 1;
                }
            }
        }
        report.summary.insert("mcni_fixed_narrower_and_covers_seeds".into(), wins.into());
        report.summary.insert("n_seeds".into(), cfg.seeds.len().into());
    }
    Ok(ToyRun { runs, report })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

/// Writes `predictions.csv`, `intervals.csv`, `metrics.json` and the manifest.
pub fn cmd_toy(cfg: &ToyConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut w = ArtifactWriter::new(out, "toy", cfg)?;
    let t0 = std::time::Instant::now();
    let run = run_toy(cfg)?;
    w.time("train_and_predict", t0.elapsed().as_secs_f64());

    let mut pred = String::from("seed,model,x,y,mean\n");
    let mut intervals = String::from("seed,model,x,sigma,lower,upper\n");
    for r in &run.runs {
        let x = r.data.x.data();
        let y = r.data.regression_targets()?.data();
        for i in 0..x.len() {
            pred.push_str(&format!("{},{},{:?},{:?},{:?}\n", r.seed, r.family.label(), x[i], y[i], r.mean[i]));
            let s = r.summary.as_ref();
            intervals.push_str(&format!(
                "{},{},{:?},{},{},{}\n",
                r.seed,
                r.family.label(),
                x[i],
                opt_cell(s.map(|s| s.sigma.data()[i])),
                opt_cell(s.map(|s| s.lower.data()[i])),
                opt_cell(s.map(|s| s.upper.data()[i])),
            ));
        }
    }
    w.write("predictions.csv", pred)?;
    w.write("intervals.csv", intervals)?;
    w.write_json("metrics.json", &run.report)?;
    w.finish(serde_json::to_value(&run.report.rows)?)
}
