//! Labeling-period and lookback-length ablations.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, ExperimentConfig, REPORT_SCHEMA_VERSION};
use crate::artifacts::Artifacts;
use crate::error::{Error, Result};
use crate::features::FeatureSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LookbackMode {
    PerMonth,
    Aggregated,
}

impl FromStr for LookbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-month" => Ok(LookbackMode::PerMonth),
            "aggregated" => Ok(LookbackMode::Aggregated),
            other => Err(Error::Config(format!("unknown lookback mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub series: String,
    pub x: usize,
    pub auc: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub parameter: String,
    pub kind: String,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn series(&self, name: &str) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter(|p| p.series == name)
            .map(|p| (p.x, p.auc))
            .collect()
    }

    /// Long-format CSV: `series,x,auc,accuracy`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["series", self.parameter.as_str(), "auc", "accuracy"])?;
        for p in &self.points {
            w.write_record([p.series.clone(), p.x.to_string(), p.auc.to_string(), p.accuracy.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<sweep>", e))?;
        Ok(())
    }
}

fn run_cells(artifacts: &Artifacts, cells: Vec<(String, usize, ExperimentConfig)>) -> Result<Vec<SweepPoint>> {
    cells
        .into_par_iter()
        .map(|(series, x, cfg)| {
            let e = run_experiment(artifacts, &cfg)?;
            Ok(SweepPoint {
                series,
                x,
                auc: e.report.auc,
                accuracy: e.report.accuracy,
            })
        })
        .collect()
}

/// Retrains with m-month training labels for every m while the evaluation
/// labels stay at `base.eval_m`. Emits an `all-features` and a `score-only`
/// series.
pub fn run_m_sweep(artifacts: &Artifacts, base: &ExperimentConfig, m_values: &[usize]) -> Result<SweepReport> {
    let Some(&max_m) = m_values.iter().max() else {
        return Err(Error::Config("m-sweep needs at least one m".into()));
    };
    if m_values.contains(&0) {
        return Err(Error::Config("labeling period m must be at least 1".into()));
    }
    let last_needed = base.train_ref.offset(max_m.max(base.eval_m) as i64 - 1);
    artifacts.month(last_needed)?;
    let mut cells = Vec::new();
    for (series, set) in [("all-features", FeatureSet::all()), ("score-only", FeatureSet::ScoreOnly)] {
        for &m in m_values {
            let cfg = ExperimentConfig {
                m,
                feature_set: set.clone(),
                ..base.clone()
            };
            cells.push((series.to_string(), m, cfg));
        }
    }
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        parameter: "m".into(),
        kind: base.kind.to_string(),
        seed: base.split.seed,
        points: run_cells(artifacts, cells)?,
    })
}

/// Rebuilds features with an n-month lookback for every n. Series:
/// `all-features` and `score-only` in per-month mode, `score-only-aggregated`
/// in aggregated mode.
pub fn run_n_sweep(artifacts: &Artifacts, base: &ExperimentConfig, n_values: &[usize], modes: &[LookbackMode]) -> Result<SweepReport> {
    let Some(&max_n) = n_values.iter().max() else {
        return Err(Error::Config("n-sweep needs at least one n".into()));
    };
    if n_values.contains(&0) {
        return Err(Error::Config("lookback n must be at least 1".into()));
    }
    artifacts.month(base.train_ref.offset(1 - max_n as i64))?;
    let mut cells = Vec::new();
    for &mode in modes {
        let variants: &[(&str, FeatureSet)] = match mode {
            LookbackMode::PerMonth => &[("all-features", FeatureSet::all()), ("score-only", FeatureSet::ScoreOnly)],
            LookbackMode::Aggregated => &[("score-only-aggregated", FeatureSet::Aggregated)],
        };
        for (series, set) in variants {
            for &n in n_values {
                let cfg = ExperimentConfig {
                    n,
                    feature_set: set.clone(),
                    ..base.clone()
                };
                cells.push((series.to_string(), n, cfg));
            }
        }
    }
    Ok(SweepReport {
        schema_version: REPORT_SCHEMA_VERSION,
        parameter: "n".into(),
        kind: base.kind.to_string(),
        seed: base.split.seed,
        points: run_cells(artifacts, cells)?,
    })
}
