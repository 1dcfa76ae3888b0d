use std::path::{Path, PathBuf};

use super::{read_input, ArtifactWriter, RunManifest};
use crate::error::{Error, Result};
use crate::metrics::{default_coverage_grid, risk_coverage, RiskCoverageCurve, RiskInputs, RiskKind};

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct RiskCovArgs {
    /// CSV with `y,mean` columns (RMSE) or `label,predicted` (error rate).
    pub predictions: PathBuf,
    /// CSV holding the uncertainty column; defaults to `predictions`.
    pub uncertainty: Option<PathBuf>,
    pub column: String,
    pub kind: RiskKind,
    pub grid: Option<Vec<f64>>,
}

impl RiskCovArgs {
    pub fn new(predictions: impl Into<PathBuf>, kind: RiskKind) -> Self {
        Self {
            predictions: predictions.into(),
            uncertainty: None,
            column: "uncertainty".into(),
            kind,
            grid: None,
        }
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(text: &str, name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| Error::Data(format!("{name}: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(|e| Error::Data(format!("{name}: {e}")))?;
        Ok(Self { headers, rows })
    }

    fn column(&self, col: &str, name: &str) -> Result<Vec<f64>> {
        let j = self
            .headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::Data(format!("{name}: no column '{col}' (have {:?})", self.headers)))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.get(j)
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("{name}: row {} column '{col}' is not a finite number", i + 1)))
            })
            .collect()
    }
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_input(path)?).map_err(|_| Error::Data(format!("{} is not UTF-8", path.display())))
}

/// Builds the curve from prediction and uncertainty CSV texts.
pub fn risk_curve_from_csv(pred_text: &str, unc_text: &str, column: &str, kind: RiskKind, grid: &[f64]) -> Result<RiskCoverageCurve> {
    let pred = Table::parse(pred_text, "predictions")?;
    let unc = Table::parse(unc_text, "uncertainty")?.column(column, "uncertainty")?;
    let n = pred.rows.len();
    if unc.len() != n {
        return Err(Error::Data(format!("{n} predictions but {} uncertainties", unc.len())));
    }
    match kind {
        RiskKind::Rmse => {
            let y = pred.column("y", "predictions")?;
            let m = pred.column("mean", "predictions")?;
            let se: Vec<f64> = y.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).collect();
            risk_coverage(&unc, RiskInputs::SquaredErrors(&se), grid)
        }
        RiskKind::ErrorRate => {
            let l = pred.column("label", "predictions")?;
            let p = pred.column("predicted", "predictions")?;
            let ok: Vec<bool> = l.iter().zip(&p).map(|(a, b)| a == b).collect();
            risk_coverage(&unc, RiskInputs::Correct(&ok), grid)
        }
    }
}

/// Writes `curve.csv` (`coverage,risk`, plus `accuracy` for classification).
pub fn cmd_riskcov(args: &RiskCovArgs, out: &Path) -> Result<RunManifest> {
    let grid = args.grid.clone().unwrap_or_else(default_coverage_grid);
    if grid.is_empty() || grid.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) || !grid.contains(&1.0) {
        return Err(Error::Config(format!("grid must lie in (0, 1] and include 1.0, got {grid:?}")));
    }
    let pred_text = read_text(&args.predictions)?;
    let unc_path = args.uncertainty.clone().unwrap_or_else(|| args.predictions.clone());
    let unc_text = read_text(&unc_path)?;
    let mut w = ArtifactWriter::new(out, "riskcov", args)?;
    w.add_input(&args.predictions, pred_text.as_bytes());
    if args.uncertainty.is_some() {
        w.add_input(&unc_path, unc_text.as_bytes());
    }
    let curve = risk_curve_from_csv(&pred_text, &unc_text, &args.column, args.kind, &grid)?;
    w.write("curve.csv", curve.to_csv())?;
    w.finish(serde_json::json!({ "points": curve.points.len(), "skipped": curve.skipped }))
}
