//! Experiment commands behind the `mcni` binary.
//!
//! Each command validates its whole configuration first, then runs, then
//! writes CSV/JSON artifacts plus a `manifest.json` into an output
//! directory. Apart from the timings in the manifest and `timing.csv`, the
//! outputs are a pure function of the configuration and input files.

mod artifacts;
mod bench_time;
mod benchmark;
pub mod config;
mod gpcheck;
mod riskcov;
mod sweep;
mod toy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use artifacts::{read_input, round4, sha256_hex, write_atomic, ArtifactWriter, FileDigest, RunManifest, MANIFEST_NAME, SCHEMA_VERSION};
pub use bench_time::{cmd_bench_time, run_bench_time, TimingRow};
pub use benchmark::{cmd_benchmark, load_benchmark_data, run_benchmark, BenchmarkRun, FamilyResult};
pub use config::{
    load_config, parse_config, BenchTimeConfig, BenchmarkConfig, GpCheckConfig, ModelSection, SweepConfig, ToyConfig,
    TrainSection,
};
pub use gpcheck::{cmd_gpcheck, run_gpcheck, GpCheckRow};
pub use riskcov::{cmd_riskcov, risk_curve_from_csv, RiskCovArgs};
pub use sweep::{cmd_noise_sweep, run_noise_sweep, SweepRun};
pub use toy::{cmd_toy, run_toy, ToyRun};

/// One model (and seed) worth of named metrics; `None` marks a metric that
/// could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: Option<u64>,
    pub model: String,
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl MetricRow {
    pub fn new(seed: Option<u64>, model: &str) -> Self {
        Self {
            seed,
            model: model.to_string(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, name: &str, v: impl Into<Option<f64>>) -> &mut Self {
        self.metrics.insert(name.to_string(), v.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }
}

/// Contents of a command's `metrics.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub rows: Vec<MetricRow>,
    pub summary: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn rows_for(&self, model: &str) -> impl Iterator<Item = &MetricRow> {
        let model = model.to_string();
        self.rows.iter().filter(move |r| r.model == model)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}
