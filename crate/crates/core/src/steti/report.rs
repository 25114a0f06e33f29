//! CSV grids and JSON summaries of a phase run.

use std::io::Write;

use serde::Serialize;

use super::pipeline::{phase_label, CellOutcome, PhaseOutcome, Setting, StageResult};
use super::Result;
use crate::hypertune::HyperParams;
use crate::neuralnet::EpochRecord;

fn split_label(ratio: f64) -> String {
    let a = (ratio * 100.0).round() as i64;
    format!("{a}:{}", 100 - a)
}

/// Test RMSE per cell: one row per setting and split ratio, one column per batch size.
pub fn grid_csv(stage: &StageResult) -> String {
    let mut batches = Vec::new();
    let mut rows: Vec<(Setting, f64)> = Vec::new();
    for c in &stage.cells {
        if !batches.contains(&c.batch_size) {
            batches.push(c.batch_size);
        }
        if !rows.iter().any(|r| r.0 == c.setting && r.1 == c.split_ratio) {
            rows.push((c.setting, c.split_ratio));
        }
    }
    let mut out = String::from("setting,split");
    for b in &batches {
        out.push(',');
        out.push_str(&b.label());
    }
    out.push('\n');
    for (setting, ratio) in rows {
        out.push_str(setting.label());
        out.push(',');
        out.push_str(&split_label(ratio));
        for b in &batches {
            out.push(',');
            if let Some(c) = stage
                .cells
                .iter()
                .find(|c| c.setting == setting && c.split_ratio == ratio && c.batch_size == *b)
            {
                out.push_str(&format!("{:.6}", c.test_rmse));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub setting: String,
    pub split: String,
    pub batch_size: String,
    pub test_rmse: f64,
    pub observed_rmse: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub hyperparams: HyperParams,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub phase: String,
    pub stages: Vec<StageSummary>,
}

fn stage_summary(name: &str, cell: &CellOutcome, checkpoint: Option<String>) -> StageSummary {
    StageSummary {
        stage: name.into(),
        setting: cell.setting.label().into(),
        split: split_label(cell.split_ratio),
        batch_size: cell.batch_size.label(),
        test_rmse: cell.test_rmse,
        observed_rmse: cell.observed_rmse,
        best_epoch: cell.best_epoch,
        epochs_run: cell.history.len(),
        hyperparams: cell.model.hyperparams,
        checkpoint,
    }
}

pub fn phase_summary(outcome: &PhaseOutcome, checkpoints: [Option<String>; 2]) -> PhaseSummary {
    let [c1, c2] = checkpoints;
    PhaseSummary {
        phase: phase_label(outcome.phase).into(),
        stages: vec![
            stage_summary("failure_time", outcome.stage1.best_cell(), c1),
            stage_summary("launch_time", outcome.stage2.best_cell(), c2),
        ],
    }
}

pub fn write_history_csv<W: Write>(writer: W, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_loss"])
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    for h in history {
        w.write_record([h.epoch.to_string(), h.train_loss.to_string(), h.val_loss.to_string()])
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_labels() {
        assert_eq!(split_label(0.75), "75:25");
        assert_eq!(split_label(0.85), "85:15");
    }
}
