use steti::benchmark::BenchmarkError;
use steti::dataset::DatasetError;
use steti::hypertune::HyperError;
use steti::scenario::ScenarioError;
use steti::steti::StetiError;

/// Validation errors exit with 1, runtime failures with 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {context}: {e}"))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StetiError> for CliError {
    fn from(e: StetiError) -> Self {
        match e {
            StetiError::InvalidParams(_)
            | StetiError::DegenerateData(_)
            | StetiError::Config(_)
            | StetiError::Checkpoint(_)
            | StetiError::Features(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<HyperError> for CliError {
    fn from(e: HyperError) -> Self {
        match e {
            HyperError::InvalidParams(_) | HyperError::Ledger { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<BenchmarkError> for CliError {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::Data(_) | BenchmarkError::Underdetermined { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Steti(inner) => inner.into(),
            ScenarioError::Csv(_) | ScenarioError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
