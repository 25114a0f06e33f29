//! Censoring-aware lifetime trend estimation: the closed-form failure-date fit and the
//! two-stage recurrent pipeline that transfers failure-date predictions to a launch-date model.

mod checkpoint;
mod closed_form;
mod diagnostic;
mod pipeline;
mod report;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use closed_form::{
    failure_fit_objective, fit_closed_form, fit_naive, launch_curve, plug_back, solve_failure_lifetime,
    LaunchCurve, TrendParams, DEFAULT_EPOCH,
};
pub use diagnostic::{censoring_diagnostic, write_diagnostic_csv, DiagnosticRow};
pub use pipeline::{
    architecture_for, compare_models, ledger_path, phase_label, run_phase, stage1_train, stage2_train, train_cell, CellOutcome,
    Comparison, PhaseConfig, PhaseOutcome, Setting, StageHyper, StageResult, TrainBudget, TrainedModel, Tuning,
};
pub use report::{grid_csv, phase_summary, write_history_csv, PhaseSummary, StageSummary};

use crate::features::FeatureError;
use crate::hypertune::HyperError;
use crate::neuralnet::NetError;

#[derive(Debug, Error)]
pub enum StetiError {
    #[error("steti: invalid trend parameters: {0}")]
    InvalidParams(String),
    #[error("steti: implicit lifetime solve did not converge at failure date {failure_date}")]
    NoConvergence { failure_date: f64 },
    #[error("steti: degenerate data: {0}")]
    DegenerateData(String),
    #[error("steti: length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("steti: {0}")]
    Config(String),
    #[error("steti: checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Hyper(#[from] HyperError),
    #[error("steti: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StetiError>;

/// Mean squared error.
pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(StetiError::LengthMismatch(y.len(), y_hat.len()));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metrics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        // (1 + 4 + 9) / 3 by hand.
        assert!((mse(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 14.0 / 3.0).abs() < 1e-12);
        assert!((rmse(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 2.160246899469287).abs() < 1e-12);
        assert!(mse(&[1.0], &[]).is_err());
    }
}
