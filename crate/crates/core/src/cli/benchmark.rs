use std::collections::BTreeMap;
use std::path::Path;

use super::config::BenchmarkConfig;
use super::{read_input, ArtifactWriter, MetricRow, Report, RunManifest};
use crate::data::{parse_csv, split, standardize_fit_apply, Dataset, SplitSpec, Standardization, TargetColumns};
use crate::error::{Error, Result};
use crate::mc::{mc_predict, summarize_regression};
use crate::metrics::{msll, mpiw, nll_gaussian, picp, rmse, MsllAggregation, DEFAULT_SIGMA_FLOOR};
use crate::nn::{build_network, Task};
use crate::optim::{fit, grid_search, leaderboard_csv, CellOutcome, GridPoint, LeaderboardRow, TrainedModel};
use crate::rng::{labels, RandomStream};

/// Test-set outcome of one family's selected configuration.
#[derive(Clone, Debug)]
pub struct FamilyResult {
    pub seed: u64,
    pub best: GridPoint,
    /// Raw-scale targets and predictions on the test split.
    pub y: Vec<f64>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nll: Vec<f64>,
    pub metrics: MetricRow,
}

#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub leaderboard: Vec<LeaderboardRow>,
    /// Seed of each leaderboard row.
    pub leaderboard_seeds: Vec<u64>,
    pub results: Vec<FamilyResult>,
    pub report: Report,
}

/// Loads the configured CSV as a single-target regression set.
pub fn load_benchmark_data(cfg: &BenchmarkConfig) -> Result<(Dataset, Vec<u8>)> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given".into()))?;
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Data(format!("{} is not UTF-8", path.display())))?;
    let targets = if cfg.data.targets.is_empty() {
        TargetColumns::Last
    } else {
        TargetColumns::Named(cfg.data.targets.clone())
    };
    let ds = parse_csv(&text, &targets, Task::Regression)?;
    if ds.regression_targets()?.cols() != 1 {
        return Err(Error::Data("benchmark expects exactly one target column".into()));
    }
    Ok((ds, bytes))
}

struct Prepared {
    train: Dataset,
    val: Dataset,
    test: Dataset,
    stats: Standardization,
}

fn prepare(ds: &Dataset, cfg: &BenchmarkConfig, seed: u64) -> Result<Prepared> {
    let s = cfg.data.split;
    let (train, val, test) = split(ds, &SplitSpec::new(s[0], s[1], s[2], seed))?;
    if val.is_empty() || test.is_empty() {
        return Err(Error::Data(format!(
            "{} rows are too few for the split {s:?}",
            ds.len()
        )));
    }
    let (train, rest, stats) = standardize_fit_apply(&train, &[&val, &test])?;
    let mut rest = rest.into_iter();
    Ok(Prepared {
        train,
        val: rest.next().expect("val"),
        test: rest.next().expect("test"),
        stats,
    })
}

// Every cell of one seed starts from the same initial weights and batch
// order, so configurations differ only in their hyperparameters.
fn train_cell(cfg: &BenchmarkConfig, p: &Prepared, point: &GridPoint, seed: u64) -> Result<TrainedModel> {
    let root = RandomStream::new(seed);
    let arch = cfg.model.architecture(p.train.n_features(), 1);
    let net = build_network(&arch, &cfg.model.kind(point.family, point.param), Task::Regression, &root.derive(labels::INIT))?;
    let tc = cfg.train.train_config_with(point.lr, point.weight_decay, p.train.len(), seed);
    fit(net, &p.train, Some(&p.val), &tc)
}

fn evaluate(cfg: &BenchmarkConfig, p: &Prepared, model: &TrainedModel, point: GridPoint, seed: u64) -> Result<FamilyResult> {
    let samples = mc_predict(&model.network, &p.test.x, cfg.passes, &RandomStream::new(seed).derive(labels::MC_PASSES))?;
    let s = summarize_regression(&samples)?;
    let y_std = p.test.regression_targets()?;
    let mean_raw = p.stats.inverse_targets(&s.mean);
    let sigma_raw = p.stats.inverse_target_std(&s.sigma);
    let y_raw = p.stats.inverse_targets(y_std);
    let lower: Vec<f64> = mean_raw.data().iter().zip(sigma_raw.data()).map(|(m, s)| m - 3.0 * s).collect();
    let upper: Vec<f64> = mean_raw.data().iter().zip(sigma_raw.data()).map(|(m, s)| m + 3.0 * s).collect();
    let nll = nll_gaussian(y_raw.data(), mean_raw.data(), sigma_raw.data(), DEFAULT_SIGMA_FLOOR)?;

    let mut m = MetricRow::new(Some(seed), point.family.label());
    m.set("test_rmse", rmse(&mean_raw, &y_raw)?)
        .set("test_rmse_standardized", rmse(&s.mean, y_std)?)
        .set("test_nll_sum", nll.sum)
        .set("test_nll_mean", nll.mean())
        .set("sigma_floored", nll.floored as f64)
        .set("picp", picp(y_raw.data(), &lower, &upper)?)
        .set("mpiw", mpiw(&lower, &upper)?)
        .set("val_loss", model.best_val_loss())
        .set("best_epoch", model.best_epoch as f64)
        .set("lr", point.lr)
        .set("weight_decay", point.weight_decay)
        .set(point.family.param_name().unwrap_or("param"), point.param);
    Ok(FamilyResult {
        seed,
        best: point,
        y: y_raw.into_data(),
        mean: mean_raw.into_data(),
        sigma: sigma_raw.into_data(),
        lower,
        upper,
        nll: nll.per_point,
        metrics: m,
    })
}

/// Grid-searches every configured family on every seed's split, evaluates
/// the selected configurations on the test split and computes MSLL against
/// the baseline family.
pub fn run_benchmark(cfg: &BenchmarkConfig, ds: &Dataset) -> Result<BenchmarkRun> {
    if cfg.passes < 2 {
        return Err(Error::Config("benchmark needs passes >= 2 for predictive variance".into()));
    }
    let mut leaderboard = Vec::new();
    let mut leaderboard_seeds = Vec::new();
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let p = prepare(ds, cfg, seed)?;
        let mut seed_results: Vec<FamilyResult> = Vec::new();
        for &family in &cfg.families {
            let g = grid_search(family, &cfg.grid, &RandomStream::new(seed), |point, _| {
                let m = train_cell(cfg, &p, point, seed)?;
                let mut metrics = BTreeMap::new();
                metrics.insert("best_epoch".to_string(), m.best_epoch as f64);
                Ok(CellOutcome {
                    val_loss: m.best_val_loss().unwrap_or(f64::INFINITY),
                    metrics,
                })
            })?;
            // training is a pure function of (config, seed), so retraining
            // the winner reproduces the model that was scored
            let model = train_cell(cfg, &p, &g.best, seed)?;
            seed_results.push(evaluate(cfg, &p, &model, g.best, seed)?);
            leaderboard_seeds.extend(std::iter::repeat(seed).take(g.leaderboard.len()));
            leaderboard.extend(g.leaderboard);
        }
        let baseline = seed_results.iter().find(|r| r.best.family == cfg.baseline).map(|r| r.nll.clone());
        for r in &mut seed_results {
            let v = match &baseline {
                Some(b) => Some(msll(&r.nll, b, MsllAggregation::Sum)?),
                None => None,
            };
            r.metrics.set("msll", v);
            let vm = match &baseline {
                Some(b) => Some(msll(&r.nll, b, MsllAggregation::Mean)?),
                None => None,
            };
            r.metrics.set("msll_per_point", vm);
        }
        results.extend(seed_results);
    }

    let mut report = Report::new("benchmark");
    report.rows = results.iter().map(|r| r.metrics.clone()).collect();
    report.summary.insert("baseline".into(), cfg.baseline.label().into());
    report.summary.insert("n_rows".into(), ds.len().into());
    report.summary.insert("passes".into(), cfg.passes.into());
    report
        .notes
        .push("test_rmse, nll and intervals are on the raw target scale; msll sums per-point NLL differences".into());
    Ok(BenchmarkRun {
        leaderboard,
        leaderboard_seeds,
        results,
        report,
    })
}

/// Writes `leaderboard.csv`, `metrics.json`, one predictions file per
/// family and seed, and the manifest.
pub fn cmd_benchmark(cfg: &BenchmarkConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let (ds, bytes) = load_benchmark_data(cfg)?;
    let mut w = ArtifactWriter::new(out, "benchmark", cfg)?;
    w.add_input(cfg.data.path.as_ref().expect("validated"), &bytes);
    let t0 = std::time::Instant::now();
    let run = run_benchmark(cfg, &ds)?;
    w.time("grid_search_and_eval", t0.elapsed().as_secs_f64());

    let csv = leaderboard_csv(&run.leaderboard);
    let mut lines = csv.lines();
    let mut text = format!("seed,{}\n", lines.next().unwrap_or_default());
    for (line, seed) in lines.zip(&run.leaderboard_seeds) {
        text.push_str(&format!("{seed},{line}\n"));
    }
    w.write("leaderboard.csv", text)?;
    for r in &run.results {
        let mut s = String::from("index,y,mean,sigma,lower,upper,uncertainty\n");
        for i in 0..r.y.len() {
            s.push_str(&format!(
                "{i},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                r.y[i], r.mean[i], r.sigma[i], r.lower[i], r.upper[i], r.sigma[i]
            ));
        }
        w.write(&format!("predictions_{}_seed{}.csv", r.best.family.label(), r.seed), s)?;
    }
    w.write_json("metrics.json", &run.report)?;
    w.finish(serde_json::to_value(&run.report.rows)?)
}
