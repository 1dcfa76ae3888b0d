//! Evaluation metrics: interval coverage and width, RMSE, Gaussian NLL, MSLL,
//! calibration error, Brier score and risk-coverage curves.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_ECE_BINS: usize = 15;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    same_len("interval bounds", lower.len(), upper.len())?;
    if let Some(i) = lower.iter().zip(upper).position(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument(format!(
            "interval {i} is inverted: [{}, {}]",
            lower[i], upper[i]
        )));
    }
    Ok(())
}

/// Fraction of targets inside their closed interval.
pub fn picp(y: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_bounds(lower, upper)?;
    same_len("targets", y.len(), lower.len())?;
    if y.is_empty() {
        return Err(Error::InvalidArgument("picp of an empty set".into()));
    }
    let inside = y
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(v, (l, u))| *l <= *v && *v <= *u)
        .count();
    Ok(inside as f64 / y.len() as f64)
}

/// Mean interval width.
pub fn mpiw(lower: &[f64], upper: &[f64]) -> Result<f64> {
    check_bounds(lower, upper)?;
    if lower.is_empty() {
        return Err(Error::InvalidArgument("mpiw of an empty set".into()));
    }
    Ok(lower.iter().zip(upper).map(|(l, u)| u - l).sum::<f64>() / lower.len() as f64)
}

pub fn rmse(pred: &Tensor, y: &Tensor) -> Result<f64> {
    if !pred.same_shape(y) {
        return Err(Error::shape(format!("rmse: {:?} vs {:?}", pred.shape(), y.shape())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty set".into()));
    }
    let ss: f64 = pred.data().iter().zip(y.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNll {
    pub per_point: Vec<f64>,
    pub sum: f64,
    /// Points whose sigma was raised to the floor.
    pub floored: usize,
}

impl GaussianNll {
    pub fn mean(&self) -> f64 {
        self.sum / self.per_point.len() as f64
    }
}

/// `0.5 ln(2 pi s^2) + (y - m)^2 / (2 s^2)` per point, with `s` clamped to
/// at least `sigma_floor`.
pub fn nll_gaussian(y: &[f64], mean: &[f64], sigma: &[f64], sigma_floor: f64) -> Result<GaussianNll> {
    same_len("nll mean", y.len(), mean.len())?;
    same_len("nll sigma", y.len(), sigma.len())?;
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma floor must be > 0, got {sigma_floor}")));
    }
    let mut floored = 0;
    let per_point: Vec<f64> = y
        .iter()
        .zip(mean)
        .zip(sigma)
        .map(|((t, m), s)| {
            let s = if *s <= sigma_floor || s.is_nan() {
                floored += 1;
                sigma_floor
            } else {
                *s
            };
            let var = s * s;
            0.5 * (2.0 * std::f64::consts::PI * var).ln() + (t - m) * (t - m) / (2.0 * var)
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} of {} predictive sigmas raised to the floor {sigma_floor}", y.len());
    }
    let sum = per_point.iter().sum();
    Ok(GaussianNll { per_point, sum, floored })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsllAggregation {
    #[default]
    Sum,
    Mean,
}

/// Log-loss of a model relative to a baseline (negative is better).
pub fn msll(model_nll: &[f64], baseline_nll: &[f64], agg: MsllAggregation) -> Result<f64> {
    same_len("msll", model_nll.len(), baseline_nll.len())?;
    let diff: f64 = model_nll.iter().sum::<f64>() - baseline_nll.iter().sum::<f64>();
    Ok(match agg {
        MsllAggregation::Sum => diff,
        MsllAggregation::Mean => diff / model_nll.len().max(1) as f64,
    })
}

/// Bin of a confidence among `n_bins` equal-width bins on `[0, 1]`. Bins are
/// right-closed, except that 0 falls in the first.
pub fn ece_bin(confidence: f64, n_bins: usize) -> usize {
    let nb = n_bins as f64;
    let mut b = ((confidence * nb).ceil() as usize).saturating_sub(1).min(n_bins - 1);
    // product rounding can land an edge value one bin off
    if b > 0 && confidence <= b as f64 / nb {
        b -= 1;
    } else if b + 1 < n_bins && confidence > (b + 1) as f64 / nb {
        b += 1;
    }
    b
}

pub fn ece(confidences: &[f64], correct: &[bool], n_bins: usize) -> Result<f64> {
    same_len("ece", confidences.len(), correct.len())?;
    if n_bins == 0 {
        return Err(Error::InvalidArgument("ece needs at least one bin".into()));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {c} outside [0, 1]")));
    }
    if confidences.is_empty() {
        return Err(Error::InvalidArgument("ece of an empty set".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0; n_bins];
    let mut hits = vec![0.0; n_bins];
    for (c, ok) in confidences.iter().zip(correct) {
        let b = ece_bin(*c, n_bins);
        count[b] += 1;
        conf[b] += c;
        if *ok {
            hits[b] += 1.0;
        }
    }
    let n = confidences.len() as f64;
    Ok((0..n_bins)
        .filter(|b| count[*b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            (k / n) * (hits[b] / k - conf[b] / k).abs()
        })
        .sum())
}

/// Mean over samples of the squared distance to the one-hot label.
pub fn brier(mean_probs: &Tensor, labels: &[usize]) -> Result<f64> {
    same_len("brier", mean_probs.rows(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("brier of an empty set".into()));
    }
    let c = mean_probs.cols();
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let row = mean_probs.row(i);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("row {i} sums to {s}, not 1")));
        }
        if l >= c {
            return Err(Error::InvalidArgument(format!("label {l} out of range for {c} classes")));
        }
        total += row
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let t = if k == l { 1.0 } else { 0.0 };
                (p - t) * (p - t)
            })
            .sum::<f64>();
    }
    Ok(total / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiskKind {
    Rmse,
    ErrorRate,
}

/// Per-point inputs from which the risk of a subset is computed.
#[derive(Clone, Copy, Debug)]
pub enum RiskInputs<'a> {
    /// Squared error per point (averaged over outputs when `D > 1`).
    SquaredErrors(&'a [f64]),
    Correct(&'a [bool]),
}

impl RiskInputs<'_> {
    fn len(&self) -> usize {
        match self {
            RiskInputs::SquaredErrors(v) => v.len(),
            RiskInputs::Correct(v) => v.len(),
        }
    }

    fn kind(&self) -> RiskKind {
        match self {
            RiskInputs::SquaredErrors(_) => RiskKind::Rmse,
            RiskInputs::Correct(_) => RiskKind::ErrorRate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub coverage: f64,
    pub risk: f64,
    /// Classification only.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskCoverageCurve {
    pub points: Vec<RiskPoint>,
    pub risk_kind: RiskKind,
    /// Grid coverages that selected no points.
    pub skipped: Vec<f64>,
}

impl RiskCoverageCurve {
    /// `coverage,risk` (plus `accuracy` for classification curves).
    pub fn to_csv(&self) -> String {
        let cls = self.risk_kind == RiskKind::ErrorRate;
        let mut s = String::from(if cls { "coverage,risk,accuracy\n" } else { "coverage,risk\n" });
        for p in &self.points {
            s.push_str(&format!("{:?},{:?}", p.coverage, p.risk));
            if let Some(a) = p.accuracy {
                s.push_str(&format!(",{a:?}"));
            }
            s.push('\n');
        }
        s
    }
}

/// `0.05, 0.10, ..., 1.0`.
pub fn default_coverage_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 / 20.0).collect()
}

/// Number of points kept at coverage `x` of `n`: `ceil(x n)`, with a small
/// slack so that e.g. `0.3 * 10` keeps 3 rather than 4.
pub fn coverage_count(x: f64, n: usize) -> usize {
    ((x * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Sorts points by ascending uncertainty (ties by index) and evaluates the
/// risk of each prefix selected by the coverage grid.
pub fn risk_coverage(uncertainty: &[f64], inputs: RiskInputs<'_>, grid: &[f64]) -> Result<RiskCoverageCurve> {
    let n = uncertainty.len();
    same_len("risk_coverage", n, inputs.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("risk_coverage of an empty set".into()));
    }
    if uncertainty.iter().any(|u| u.is_nan()) {
        return Err(Error::InvalidArgument("uncertainty contains NaN".into()));
    }
    if grid.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) || !grid.contains(&1.0) {
        return Err(Error::InvalidArgument(format!("coverage grid must lie in (0, 1] and include 1.0: {grid:?}")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("coverage grid must be strictly increasing".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| uncertainty[a].total_cmp(&uncertainty[b]).then(a.cmp(&b)));

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &x in grid {
        let k = coverage_count(x, n).min(n);
        if k == 0 {
            log::warn!("coverage {x} selects no points out of {n}; skipped");
            skipped.push(x);
            continue;
        }
        let sel = &order[..k];
        let point = match inputs {
            RiskInputs::SquaredErrors(se) => RiskPoint {
                coverage: x,
                risk: (sel.iter().map(|&i| se[i]).sum::<f64>() / k as f64).sqrt(),
                accuracy: None,
            },
            RiskInputs::Correct(c) => {
                let acc = sel.iter().filter(|&&i| c[i]).count() as f64 / k as f64;
                RiskPoint {
                    coverage: x,
                    risk: 1.0 - acc,
                    accuracy: Some(acc),
                }
            }
        };
        points.push(point);
    }
    Ok(RiskCoverageCurve {
        points,
        risk_kind: inputs.kind(),
        skipped,
    })
}

/// Per-point mean squared error over the output columns.
pub fn squared_errors(pred: &Tensor, y: &Tensor) -> Result<Vec<f64>> {
    if !pred.same_shape(y) {
        return Err(Error::shape(format!("{:?} vs {:?}", pred.shape(), y.shape())));
    }
    let d = pred.cols() as f64;
    Ok((0..pred.rows())
        .map(|i| pred.row(i).iter().zip(y.row(i)).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / d)
        .collect())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len("spearman", a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs at least two points".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

/// Named metrics plus run metadata, serialized as JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub metrics: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            ..Default::default()
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn meta(&mut self, key: &str, value: impl Into<serde_json::Value>) -> &mut Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
