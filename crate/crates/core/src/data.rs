//! Datasets: the heteroscedastic toy generator, CSV ingestion, z-scoring,
//! seeded splits, and Gaussian input corruption.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Task;
use crate::rng::{labels, RandomStream};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// `N x D` real targets.
    Regression(Tensor),
    Classification { labels: Vec<usize>, n_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(t) => t.rows(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification { .. } => Task::Classification,
        }
    }

    /// Output width a network needs for these targets.
    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Regression(t) => t.cols(),
            Targets::Classification { n_classes, .. } => *n_classes,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Regression(t) => Targets::Regression(t.select_rows(idx)),
            Targets::Classification { labels, n_classes } => Targets::Classification {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Tensor,
    pub targets: Targets,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Tensor, targets: Targets) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::Data(format!("features must be 2-D, got {:?}", x.shape())));
        }
        if x.rows() != targets.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} targets",
                x.rows(),
                targets.len()
            )));
        }
        let feature_names = (0..x.cols()).map(|i| format!("x{i}")).collect();
        let target_names = match &targets {
            Targets::Regression(t) if t.cols() == 1 => vec!["y".to_string()],
            Targets::Regression(t) => (0..t.cols()).map(|i| format!("y{i}")).collect(),
            Targets::Classification { .. } => vec!["label".to_string()],
        };
        Ok(Self {
            x,
            targets,
            feature_names,
            target_names,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn task(&self) -> Task {
        self.targets.task()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            targets: self.targets.select(idx),
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
        }
    }

    pub fn regression_targets(&self) -> Result<&Tensor> {
        match &self.targets {
            Targets::Regression(t) => Ok(t),
            _ => Err(Error::Data("expected regression targets".into())),
        }
    }

    pub fn labels(&self) -> Result<&[usize]> {
        match &self.targets {
            Targets::Classification { labels, .. } => Ok(labels),
            _ => Err(Error::Data("expected class labels".into())),
        }
    }
}

/// How the toy inputs are placed on `[-2, 2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyInputs {
    /// Equally spaced, endpoints included.
    Grid,
    /// i.i.d. uniform draws.
    Random,
}

/// Noise-free toy mean function `0.3 sin(pi x)`.
pub fn toy_mean(x: f64) -> f64 {
    0.3 * (std::f64::consts::PI * x).sin()
}

/// Toy set `y = 0.3 sin(pi x) + 0.2 eta`, `eta ~ N(0, x^2)`, on a grid over `[-2, 2]`.
pub fn gen_toy(n: usize, seed: u64) -> Result<Dataset> {
    gen_toy_with(n, seed, ToyInputs::Grid)
}

pub fn gen_toy_with(n: usize, seed: u64, inputs: ToyInputs) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("toy dataset needs n >= 1".into()));
    }
    let root = RandomStream::new(seed).derive(labels::DATA);
    let mut xr = root.derive(0);
    let mut nr = root.derive(1);
    let xs: Vec<f64> = match inputs {
        ToyInputs::Grid if n == 1 => vec![0.0],
        ToyInputs::Grid => (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect(),
        ToyInputs::Random => (0..n).map(|_| xr.uniform_range(-2.0, 2.0)).collect(),
    };
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| toy_mean(x) + 0.2 * (x.abs() * nr.standard_normal()))
        .collect();
    Dataset::new(
        Tensor::matrix(n, 1, xs)?,
        Targets::Regression(Tensor::matrix(n, 1, ys)?),
    )
}

/// Smooth nonlinear regression set on `[-1, 1]^q` with mild Gaussian noise.
pub fn synthetic_regression(n: usize, q: usize, seed: u64) -> Result<Dataset> {
    let mut r = RandomStream::new(seed).derive(labels::DATA);
    let mut xs = Vec::with_capacity(n * q);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..q).map(|_| r.uniform_range(-1.0, 1.0)).collect();
        let mut y = (2.0 * row[0]).sin();
        if q > 1 {
            y += 0.5 * row[1] * row[1];
        }
        if q > 2 {
            y += 0.3 * row[2];
        }
        y += 0.1 * r.standard_normal();
        xs.extend(row);
        ys.push(y);
    }
    Dataset::new(Tensor::matrix(n, q, xs)?, Targets::Regression(Tensor::matrix(n, 1, ys)?))
}

/// Linear target `y = x . c + 0.01 noise` with fixed coefficients.
pub fn synthetic_linear(n: usize, q: usize, seed: u64) -> Result<Dataset> {
    let mut r = RandomStream::new(seed).derive(labels::DATA);
    let coef: Vec<f64> = (0..q).map(|j| if j % 2 == 0 { 1.0 } else { -0.5 } / (1.0 + j as f64)).collect();
    let mut xs = Vec::with_capacity(n * q);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..q).map(|_| r.standard_normal()).collect();
        let y = row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + 0.01 * r.standard_normal();
        xs.extend(row);
        ys.push(y);
    }
    Dataset::new(Tensor::matrix(n, q, xs)?, Targets::Regression(Tensor::matrix(n, 1, ys)?))
}

/// Two isotropic Gaussian classes in 2-D centred at `(-sep/2, 0)` and `(sep/2, 0)`.
pub fn two_blobs(n: usize, sep: f64, spread: f64, seed: u64) -> Result<Dataset> {
    let mut r = RandomStream::new(seed).derive(labels::DATA);
    let mut xs = Vec::with_capacity(2 * n);
    let mut ls = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let cx = if label == 0 { -sep / 2.0 } else { sep / 2.0 };
        xs.push(cx + spread * r.standard_normal());
        xs.push(spread * r.standard_normal());
        ls.push(label);
    }
    Dataset::new(
        Tensor::matrix(n, 2, xs)?,
        Targets::Classification {
            labels: ls,
            n_classes: 2,
        },
    )
}

/// Which CSV columns hold targets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TargetColumns {
    #[default]
    Last,
    Named(Vec<String>),
}

/// Reads a header-row CSV of numeric cells.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumns, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, target, task).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_csv(text: &str, target: &TargetColumns, task: Task) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let width = header.len();
    if width < 2 {
        return Err(Error::Data(format!("need at least 2 columns, header has {width}")));
    }
    let target_idx: Vec<usize> = match target {
        TargetColumns::Last => vec![width - 1],
        TargetColumns::Named(names) => names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h == n)
                    .ok_or_else(|| Error::Data(format!("target column '{n}' not in header {header:?}")))
            })
            .collect::<Result<_>>()?,
    };
    if task == Task::Classification && target_idx.len() != 1 {
        return Err(Error::Data("classification needs exactly one label column".into()));
    }
    let feature_idx: Vec<usize> = (0..width).filter(|i| !target_idx.contains(i)).collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        // 1-based data row number, header excluded
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
        if record.len() != width {
            return Err(Error::Data(format!(
                "row {row_no} has {} cells, header has {width}",
                record.len()
            )));
        }
        let mut cells = Vec::with_capacity(width);
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "row {row_no}, column {} ('{}'): non-numeric cell '{cell}'",
                    c + 1,
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {row_no}, column {}: non-finite value", c + 1)));
            }
            cells.push(v);
        }
        xs.extend(feature_idx.iter().map(|&i| cells[i]));
        ys.extend(target_idx.iter().map(|&i| cells[i]));
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("no data rows".into()));
    }
    let x = Tensor::matrix(n, feature_idx.len(), xs)?;
    let targets = match task {
        Task::Regression => Targets::Regression(Tensor::matrix(n, target_idx.len(), ys)?),
        Task::Classification => {
            let labels = ys
                .iter()
                .enumerate()
                .map(|(r, &v)| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(Error::Data(format!("row {}: label {v} is not a class index", r + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let n_classes = labels.iter().max().map(|m| m + 1).unwrap_or(0);
            Targets::Classification { labels, n_classes }
        }
    };
    let mut ds = Dataset::new(x, targets)?;
    ds.feature_names = feature_idx.iter().map(|&i| header[i].clone()).collect();
    ds.target_names = target_idx.iter().map(|&i| header[i].clone()).collect();
    Ok(ds)
}

/// Serializes features then targets. Floats use the shortest decimal form
/// that parses back to the same bits (at most 17 significant digits).
pub fn to_csv_string(ds: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = ds
        .feature_names
        .iter()
        .chain(&ds.target_names)
        .map(String::as_str)
        .collect();
    w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
    for r in 0..ds.len() {
        let mut rec: Vec<String> = ds.x.row(r).iter().map(|v| format!("{v:?}")).collect();
        match &ds.targets {
            Targets::Regression(t) => rec.extend(t.row(r).iter().map(|v| format!("{v:?}"))),
            Targets::Classification { labels, .. } => rec.push(labels[r].to_string()),
        }
        w.write_record(&rec).map_err(|e| Error::Data(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_csv_string(ds)?).map_err(|e| Error::io(path, e))
}

/// Train-set z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    /// Empty for classification.
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
    /// Feature columns whose train std was zero (their std is forced to 1).
    pub constant_features: Vec<usize>,
    pub constant_targets: Vec<usize>,
}

fn column_stats(t: &Tensor) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let (n, c) = (t.rows(), t.cols());
    let mut mean = vec![0.0; c];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(t.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; c];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(t.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut constant = Vec::new();
    let std = var
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let sd = (s / n as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                constant.push(j);
                1.0
            }
        })
        .collect();
    (mean, std, constant)
}

fn apply_z(t: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(mean).zip(std) {
            *v = (*v - m) / s;
        }
    }
    out
}

fn invert_z(t: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
    let mut out = t.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(mean).zip(std) {
            *v = *v * s + m;
        }
    }
    out
}

impl Standardization {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Data("cannot standardize an empty training set".into()));
        }
        let (x_mean, x_std, constant_features) = column_stats(&train.x);
        let (y_mean, y_std, constant_targets) = match &train.targets {
            Targets::Regression(t) => column_stats(t),
            Targets::Classification { .. } => (vec![], vec![], vec![]),
        };
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
            constant_features,
            constant_targets,
        })
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        out.x = apply_z(&ds.x, &self.x_mean, &self.x_std);
        if let Targets::Regression(t) = &ds.targets {
            out.targets = Targets::Regression(apply_z(t, &self.y_mean, &self.y_std));
        }
        out
    }

    pub fn inverse_features(&self, x: &Tensor) -> Tensor {
        invert_z(x, &self.x_mean, &self.x_std)
    }

    /// Maps standardized regression values back to raw scale.
    pub fn inverse_targets(&self, y: &Tensor) -> Tensor {
        invert_z(y, &self.y_mean, &self.y_std)
    }

    /// Scales standardized standard deviations back to raw scale.
    pub fn inverse_target_std(&self, s: &Tensor) -> Tensor {
        let mut out = s.clone();
        for r in 0..out.rows() {
            for (v, sd) in out.row_mut(r).iter_mut().zip(&self.y_std) {
                *v *= sd;
            }
        }
        out
    }
}

/// Fits z-scores on `train` only and applies them to every set.
pub fn standardize_fit_apply(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Standardization)> {
    let stats = Standardization::fit(train)?;
    let t = stats.apply(train);
    let o = others.iter().map(|d| stats.apply(d)).collect();
    Ok((t, o, stats))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Self {
        Self { train, val, test, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|v| !(*v >= 0.0)) || !(self.train > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid split fractions {f:?}")));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split fractions {f:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// Seeded permutation then contiguous slicing into train/val/test.
///
/// Val and test sizes are `floor(fraction * N)`; train takes the remainder.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(ds.len(), spec)?;
    Ok((ds.subset(&idx.0), ds.subset(&idx.1), ds.subset(&idx.2)))
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    let n_val = (spec.val * n as f64).floor() as usize;
    let n_test = (spec.test * n as f64).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    if n_train == 0 {
        return Err(Error::Data(format!("split of {n} rows leaves the training set empty")));
    }
    let perm = RandomStream::new(spec.seed).derive(labels::SPLIT).permutation(n);
    let train = perm[..n_train].to_vec();
    let val = perm[n_train..n_train + n_val].to_vec();
    let test = perm[n_train + n_val..].to_vec();
    Ok((train, val, test))
}

/// `X + N(0, sigma^2)` element-wise.
pub fn gaussian_corrupt(x: &Tensor, sigma: f64, rng: &mut RandomStream) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("corruption sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.map(|v| v + sigma * rng.standard_normal()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_noise_vanishes_at_origin() {
        let ds = gen_toy(5, 3).unwrap();
        let x = ds.x.data();
        let y = ds.regression_targets().unwrap().data();
        assert_eq!(x, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(y[2], 0.0);
        assert!((toy_mean(0.5) - 0.3).abs() < 1e-15);
        assert_eq!(gen_toy(200, 1).unwrap().len(), 200);
        assert!(gen_toy(0, 1).is_err());
    }

    #[test]
    fn toy_is_seed_reproducible() {
        assert_eq!(gen_toy(50, 9).unwrap(), gen_toy(50, 9).unwrap());
        assert_ne!(gen_toy(50, 9).unwrap(), gen_toy(50, 10).unwrap());
        let a = gen_toy_with(50, 9, ToyInputs::Random).unwrap();
        assert!(a.x.data().iter().all(|v| (-2.0..2.0).contains(v)));
    }

    #[test]
    fn toy_noise_std_at_one() {
        let n = 100_000;
        let ys: Vec<f64> = (0..n)
            .map(|s| gen_toy(5, s as u64).unwrap().regression_targets().unwrap().data()[3])
            .collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!((sd - 0.2).abs() / 0.2 < 0.02, "sd {sd}");
        assert!((mean - toy_mean(1.0)).abs() < 0.01);
    }

    #[test]
    fn csv_last_column_is_target() {
        let text = "a,b,c\n1,2,3\n4,5,6\n7,8,9\n";
        let ds = parse_csv(text, &TargetColumns::Last, Task::Regression).unwrap();
        assert_eq!(ds.x.shape(), &[3, 2]);
        assert_eq!(ds.regression_targets().unwrap().data(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);

        let named = parse_csv(text, &TargetColumns::Named(vec!["a".into()]), Task::Regression).unwrap();
        assert_eq!(named.regression_targets().unwrap().data(), &[1.0, 4.0, 7.0]);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let ragged = "a,b,c\n1,2,3\n4,5\n";
        let e = parse_csv(ragged, &TargetColumns::Last, Task::Regression).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");

        let bad = "a,b\n1,2\n3,x\n";
        let e = parse_csv(bad, &TargetColumns::Last, Task::Regression).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("row 2") && msg.contains("column 2"), "{msg}");

        assert!(matches!(
            load_csv("/nonexistent/file.csv", &TargetColumns::Last, Task::Regression),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_classification_labels() {
        let text = "f,label\n0.5,0\n1.5,2\n";
        let ds = parse_csv(text, &TargetColumns::Last, Task::Classification).unwrap();
        assert_eq!(ds.labels().unwrap(), &[0, 2]);
        assert!(parse_csv("f,label\n0.5,0.5\n", &TargetColumns::Last, Task::Classification).is_err());
    }

    #[test]
    fn standardized_train_has_unit_moments() {
        let ds = synthetic_regression(300, 4, 2).unwrap();
        let (t, _, stats) = standardize_fit_apply(&ds, &[]).unwrap();
        let (m, s, _) = column_stats(&t.x);
        for (m, s) in m.iter().zip(&s) {
            assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
        }
        let back = stats.inverse_features(&t.x);
        for (a, b) in back.data().iter().zip(ds.x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let yb = stats.inverse_targets(t.regression_targets().unwrap());
        for (a, b) in yb.data().iter().zip(ds.regression_targets().unwrap().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_gets_unit_std() {
        let text = "a,b,y\n1,5,1\n2,5,2\n3,5,3\n";
        let ds = parse_csv(text, &TargetColumns::Last, Task::Regression).unwrap();
        let stats = Standardization::fit(&ds).unwrap();
        assert_eq!(stats.constant_features, vec![1]);
        assert_eq!(stats.x_std[1], 1.0);
        assert!(stats.apply(&ds).x.is_finite());
    }

    #[test]
    fn no_leakage_into_stats() {
        let ds = synthetic_regression(100, 2, 4).unwrap();
        let (tr, _, te) = split(&ds, &SplitSpec::new(0.8, 0.0, 0.2, 1)).unwrap();
        // shift the test set far away
        let mut shifted = te.clone();
        shifted.x = te.x.map(|v| v + 10.0);
        let (_, others, stats) = standardize_fit_apply(&tr, &[&shifted]).unwrap();
        let (_, others2, stats2) = standardize_fit_apply(&tr, &[&te]).unwrap();
        assert_eq!(stats, stats2);
        let (m, _, _) = column_stats(&others[0].x);
        assert!(m.iter().all(|m| m.abs() > 5.0));
        let (m2, _, _) = column_stats(&others2[0].x);
        assert!(m2.iter().all(|m| m.abs() < 5.0));
    }

    #[test]
    fn split_is_a_partition() {
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 3);
        let (a, b, c) = split_indices(97, &spec).unwrap();
        assert_eq!(a.len() + b.len() + c.len(), 97);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).cloned().collect();
        all.sort_unstable();
        assert_eq!(all, (0..97).collect::<Vec<_>>());
        assert_eq!(split_indices(97, &spec).unwrap(), (a, b, c));

        let (a, b, c) = split_indices(10, &SplitSpec::new(1.0, 0.0, 0.0, 0)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10, 0, 0));

        assert!(split_indices(10, &SplitSpec::new(0.0, 0.5, 0.5, 0)).is_err());
        assert!(split_indices(10, &SplitSpec::new(0.5, 0.1, 0.1, 0)).is_err());
    }

    #[test]
    fn corruption_statistics() {
        let x = Tensor::zeros(&[1000, 1000]);
        let mut r = RandomStream::new(5);
        assert_eq!(gaussian_corrupt(&x, 0.0, &mut r).unwrap(), x);
        let y = gaussian_corrupt(&x, 0.3, &mut r).unwrap();
        let n = y.len() as f64;
        let m = y.sum() / n;
        let sd = (y.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 0.3).abs() / 0.3 < 0.01);
        let a = gaussian_corrupt(&x.select_rows(&[0]), 0.3, &mut RandomStream::new(1)).unwrap();
        let b = gaussian_corrupt(&x.select_rows(&[0]), 0.3, &mut RandomStream::new(1)).unwrap();
        assert_eq!(a, b);
        assert!(gaussian_corrupt(&x, -1.0, &mut r).is_err());
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn save_then_load_is_bit_exact(vals in proptest::collection::vec(-1e300f64..1e300, 3..30)) {
                let n = vals.len() / 3;
                let x = Tensor::matrix(n, 2, vals[..2 * n].to_vec()).unwrap();
                let y = Tensor::matrix(n, 1, vals[2 * n..3 * n].to_vec()).unwrap();
                let ds = Dataset::new(x, Targets::Regression(y)).unwrap();
                let text = to_csv_string(&ds).unwrap();
                let back = parse_csv(&text, &TargetColumns::Last, Task::Regression).unwrap();
                prop_assert_eq!(back.x, ds.x);
                prop_assert_eq!(back.targets, ds.targets);
            }
        }
    }
}
