//! Smoothed observed lifetimes against the fitted trend curves, by launch date.

use std::io::Write;

use serde::Serialize;

use super::closed_form::{launch_curve, TrendParams};
use super::Result;
use crate::dataset::MissionRecord;
use crate::features::moving_average;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub name: String,
    pub launch_date: f64,
    pub lifetime: f64,
    /// Centered moving average of `lifetime` over neighbouring launches.
    pub moving_average: f64,
    pub corrected_curve: f64,
    pub naive_curve: f64,
}

/// One row per failed record in launch order.
pub fn censoring_diagnostic(
    records: &[MissionRecord],
    corrected: &TrendParams,
    naive: &TrendParams,
    window: usize,
) -> Vec<DiagnosticRow> {
    let mut failed: Vec<&MissionRecord> = records.iter().filter(|r| r.lifetime.is_some()).collect();
    failed.sort_by(|a, b| a.launch_date.total_cmp(&b.launch_date));
    let lifetimes: Vec<f64> = failed.iter().filter_map(|r| r.lifetime).collect();
    let smooth = moving_average(&lifetimes, window);
    failed
        .iter()
        .zip(lifetimes.iter().zip(smooth))
        .map(|(r, (&l, m))| DiagnosticRow {
            name: r.name.clone(),
            launch_date: r.launch_date,
            lifetime: l,
            moving_average: m,
            corrected_curve: launch_curve(r.launch_date, corrected),
            naive_curve: launch_curve(r.launch_date, naive),
        })
        .collect()
}

pub fn write_diagnostic_csv<W: Write>(writer: W, rows: &[DiagnosticRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
