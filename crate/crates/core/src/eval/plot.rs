//! `(x, y, series)` triples for external plotting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::importance::ImportanceReport;
use super::sweep::SweepReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: String,
    pub y: f64,
    pub series: String,
}

/// Persistence curves, one series per prior-history length.
pub fn persistence_points(curves: &[(usize, Vec<f64>)], kind: &str) -> Vec<PlotPoint> {
    curves
        .iter()
        .flat_map(|(prior, curve)| {
            curve.iter().enumerate().map(move |(k, p)| PlotPoint {
                x: (k + 1).to_string(),
                y: *p,
                series: format!("{kind}/prior-{prior}"),
            })
        })
        .collect()
}

pub fn importance_points(report: &ImportanceReport, kind: &str) -> Vec<PlotPoint> {
    report
        .ranking()
        .into_iter()
        .map(|(name, imp)| PlotPoint {
            x: name.to_string(),
            y: imp.mean,
            series: kind.to_string(),
        })
        .collect()
}

pub fn sweep_points(report: &SweepReport) -> Vec<PlotPoint> {
    report
        .points
        .iter()
        .map(|p| PlotPoint {
            x: p.x.to_string(),
            y: p.auc,
            series: format!("{}/{}", report.kind, p.series),
        })
        .collect()
}

pub fn write_plot_csv<W: Write>(points: &[PlotPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "series"])?;
    for p in points {
        w.write_record([p.x.as_str(), &p.y.to_string(), p.series.as_str()])?;
    }
    w.flush().map_err(|e| Error::io("<plot>", e))?;
    Ok(())
}
