//! Self-contained JSON model files.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::pipeline::{phase_label, TrainedModel};
use super::{Result, StetiError};
use crate::features::StageKind;

pub const CHECKPOINT_FORMAT: &str = "steti-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Header fields precede the model so a reader can reject incompatible files early.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub stage: StageKind,
    pub phase: String,
    /// Width of the dense layer after each recurrent branch.
    pub dense_width: Vec<usize>,
    /// Names of the records held out for testing when the model was trained.
    #[serde(default)]
    pub test_records: Vec<String>,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn new(model: TrainedModel) -> Self {
        let arch = &model.params.architecture;
        let dense_width = std::iter::once(arch.main.hidden_size)
            .chain(arch.funding.map(|f| f.hidden_size))
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            stage: model.encoder.stage,
            phase: phase_label(model.encoder.phase).into(),
            dense_width,
            test_records: Vec::new(),
            model,
        }
    }

    pub fn with_test_records(mut self, names: Vec<String>) -> Self {
        self.test_records = names;
        self
    }
}

pub fn write_checkpoint<W: Write>(writer: W, checkpoint: &Checkpoint) -> Result<()> {
    serde_json::to_writer_pretty(writer, checkpoint).map_err(|e| StetiError::Checkpoint(e.to_string()))
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<Checkpoint> {
    let value: serde_json::Value =
        serde_json::from_reader(reader).map_err(|e| StetiError::Checkpoint(e.to_string()))?;
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != CHECKPOINT_FORMAT {
        return Err(StetiError::Checkpoint(format!("not a model file (format `{format}`)")));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != u64::from(CHECKPOINT_VERSION) {
        return Err(StetiError::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let ck: Checkpoint = serde_json::from_value(value).map_err(|e| StetiError::Checkpoint(e.to_string()))?;
    let arch = &ck.model.params.architecture;
    if ck.model.params.values.len() != arch.param_count() {
        return Err(StetiError::Checkpoint("parameter count does not match the architecture".into()));
    }
    Ok(ck)
}
