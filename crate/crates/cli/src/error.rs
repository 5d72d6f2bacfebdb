use std::path::Path;

use wcl_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0} (pass --stabilized)")]
    Numeric(String),
    #[error("optimization diverged after {steps} steps (last loss {last_loss})")]
    Divergence { steps: usize, last_loss: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Divergence { .. } => 4,
        }
    }

    pub fn at_line(path: &Path, line: usize, msg: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{}:{line}: {msg}", path.display()))
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::NumericFailure(_) => CliError::Numeric(err.to_string()),
            Error::Divergence { trace } => CliError::Divergence {
                steps: trace.len().saturating_sub(1),
                last_loss: trace.last().map_or(f64::NAN, |r| r.loss),
            },
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
