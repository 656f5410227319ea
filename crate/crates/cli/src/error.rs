use stochnls::experiments::ExperimentError;
use stochnls::SchemeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    BlowUp(String),
    #[error("{0}")]
    Diverged(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::BlowUp(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::CheckFailed(_) | CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::BlowUp { .. } => CliError::BlowUp(e.to_string()),
            SchemeError::FixedPointDiverged { .. } => CliError::Diverged(e.to_string()),
            SchemeError::Config(c) => CliError::config(c.field, c.message),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => CliError::config(c.field, c.message),
            ExperimentError::Scheme(s) => s.into(),
            ExperimentError::InsufficientGrids { .. } => CliError::config("coarse", e.to_string()),
            ExperimentError::Incompatible(m) => CliError::config("grids", m),
            ExperimentError::Grid(g) => CliError::config("grids", g.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}
