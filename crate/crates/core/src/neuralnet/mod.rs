//! Recurrent regression network written against plain `f64` buffers.

mod lstm;
mod model;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lstm::{
    bilstm_forward, lstm_cell_forward, lstm_layer_backward, lstm_layer_forward, sigmoid, tanh,
    DropoutMasks, LayerCache, LayerOutput, LstmParams, LstmState, LstmStep, LstmWeights,
};
pub use model::{
    model_backward, model_forward, Architecture, BatchCache, BranchSpec, EmbeddingSpec,
    ForwardPass, Mode, ModelParams, NetSettings, BN_EPSILON, BN_MOMENTUM,
};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{mse_loss, predict, train, BatchSize, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("neuralnet: dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("neuralnet: categorical index {index} outside embedding table of {rows} rows")]
    VocabularyOverflow { index: usize, rows: usize },
    #[error("neuralnet: loss became non-finite at epoch {epoch}: {detail}")]
    DivergedLoss { epoch: usize, detail: String },
    #[error("neuralnet: empty {0} set")]
    EmptySet(&'static str),
    #[error("neuralnet: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Elementwise nonlinearity selectable per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Linear,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
    ];

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative at `x`, given `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| NetError::InvalidConfig(format!("unknown activation `{s}`")))
    }
}
