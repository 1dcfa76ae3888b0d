use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelKind;
use crate::rng::{labels, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Deterministic,
    McDropout,
    McniFixed,
    McniLearned,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Deterministic, Family::McDropout, Family::McniFixed, Family::McniLearned];

    pub fn label(self) -> &'static str {
        match self {
            Family::Deterministic => "deterministic",
            Family::McDropout => "mc_dropout",
            Family::McniFixed => "mcni_fixed",
            Family::McniLearned => "mcni_learned",
        }
    }

    /// Name of the family-specific hyperparameter, if any.
    pub fn param_name(self) -> Option<&'static str> {
        match self {
            Family::Deterministic => None,
            Family::McDropout => Some("dropout_p"),
            Family::McniFixed => Some("alpha"),
            Family::McniLearned => Some("alpha_init"),
        }
    }
}

/// Candidate values per hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub dropout_ps: Vec<f64>,
    pub fixed_alphas: Vec<f64>,
    pub learned_alpha_inits: Vec<f64>,
}

impl GridSpec {
    /// The full regression search ranges.
    pub fn regression_default() -> Self {
        Self {
            learning_rates: vec![0.0001, 0.0005, 0.001, 0.002],
            weight_decays: vec![0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-9],
            dropout_ps: vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.2],
            fixed_alphas: vec![0.001, 0.005, 0.01, 0.05, 0.1],
            learned_alpha_inits: vec![0.001, 0.005, 0.01, 0.05, 0.1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("learning_rates", &self.learning_rates),
            ("weight_decays", &self.weight_decays),
            ("dropout_ps", &self.dropout_ps),
            ("fixed_alphas", &self.fixed_alphas),
            ("learned_alpha_inits", &self.learned_alpha_inits),
        ];
        for (name, l) in lists {
            if l.is_empty() {
                return Err(Error::Config(format!("grid list '{name}' is empty")));
            }
            if l.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config(format!("grid list '{name}' has invalid values {l:?}")));
            }
        }
        if self.learning_rates.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if self.dropout_ps.iter().any(|v| *v >= 1.0) {
            return Err(Error::Config("dropout probabilities must be < 1".into()));
        }
        Ok(())
    }

    fn family_values(&self, family: Family) -> Vec<Option<f64>> {
        match family {
            Family::Deterministic => vec![None],
            Family::McDropout => self.dropout_ps.iter().map(|v| Some(*v)).collect(),
            Family::McniFixed => self.fixed_alphas.iter().map(|v| Some(*v)).collect(),
            Family::McniLearned => self.learned_alpha_inits.iter().map(|v| Some(*v)).collect(),
        }
    }

    /// Cartesian product in declaration order: learning rate outermost, then
    /// weight decay, then the family parameter.
    pub fn points(&self, family: Family) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &lr in &self.learning_rates {
            for &wd in &self.weight_decays {
                for p in self.family_values(family) {
                    out.push(GridPoint {
                        index: out.len(),
                        family,
                        lr,
                        weight_decay: wd,
                        param: p,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub family: Family,
    pub lr: f64,
    pub weight_decay: f64,
    pub param: Option<f64>,
}

impl GridPoint {
    pub fn model_kind(&self) -> ModelKind {
        let p = self.param.unwrap_or(0.0);
        match self.family {
            Family::Deterministic => ModelKind::Deterministic,
            Family::McDropout => ModelKind::McDropout { p },
            Family::McniFixed => ModelKind::mcni_fixed(p),
            Family::McniLearned => ModelKind::mcni_learned(p),
        }
    }
}

/// What a trainer reports for one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub val_loss: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub point: GridPoint,
    pub val_loss: f64,
    /// 1-based rank; 1 is the selected configuration.
    pub rank: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: GridPoint,
    /// One row per configuration, in declaration order.
    pub leaderboard: Vec<LeaderboardRow>,
}

impl GridResult {
    pub fn best_row(&self) -> &LeaderboardRow {
        &self.leaderboard[self.best.index]
    }

    pub fn to_csv(&self) -> String {
        leaderboard_csv(&self.leaderboard)
    }
}

/// CSV of one or more leaderboards (all hyperparameters, validation loss,
/// rank, then the union of metric columns in name order).
pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let metric_names: BTreeSet<&String> = rows.iter().flat_map(|r| r.metrics.keys()).collect();
    let mut out = String::from("family,index,lr,weight_decay,param_name,param,val_loss,rank");
    for m in &metric_names {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for r in rows {
        let p = &r.point;
        out.push_str(&format!(
            "{},{},{:?},{:?},{},{},{:?},{}",
            p.family.label(),
            p.index,
            p.lr,
            p.weight_decay,
            p.family.param_name().unwrap_or(""),
            p.param.map(|v| format!("{v:?}")).unwrap_or_default(),
            r.val_loss,
            r.rank
        ));
        for m in &metric_names {
            out.push(',');
            if let Some(v) = r.metrics.get(*m) {
                out.push_str(&format!("{v:?}"));
            }
        }
        out.push('\n');
    }
    out
}

/// Trains every configuration of `family` and ranks them by validation loss.
///
/// Cells run in parallel; cell `i` receives the stream
/// `rng.derive2(GRID, i)`, so the result is independent of scheduling. Ties
/// go to the smaller learning rate, then to declaration order.
pub fn grid_search<F>(family: Family, grid: &GridSpec, rng: &RandomStream, trainer: F) -> Result<GridResult>
where
    F: Fn(&GridPoint, RandomStream) -> Result<CellOutcome> + Sync,
{
    grid.validate()?;
    let points = grid.points(family);
    let outcomes: Vec<CellOutcome> = points
        .par_iter()
        .map(|p| trainer(p, rng.derive2(labels::GRID, p.index as u64)))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (va, vb) = (outcomes[a].val_loss, outcomes[b].val_loss);
        let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
        key(va)
            .total_cmp(&key(vb))
            .then(va.is_nan().cmp(&vb.is_nan()))
            .then(points[a].lr.total_cmp(&points[b].lr))
            .then(a.cmp(&b))
    });
    let mut ranks = vec![0; points.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r + 1;
    }
    let leaderboard = points
        .iter()
        .zip(outcomes)
        .zip(ranks)
        .map(|((p, o), rank)| LeaderboardRow {
            point: *p,
            val_loss: o.val_loss,
            rank,
            metrics: o.metrics,
        })
        .collect();
    Ok(GridResult {
        best: points[order[0]],
        leaderboard,
    })
}
