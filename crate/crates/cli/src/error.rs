//! Failure classes of the command-line tool and their exit codes.

use kronvar_core::KronError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed files, schema violations, bad arguments. Exit code 2.
    #[error("input error: {0}")]
    Input(String),
    /// Unstable models or singular structural matrices. Exit code 3.
    #[error("numerical model defect: {0}")]
    Numerical(String),
    /// An estimator failed; the message carries the error name. Exit code 4.
    #[error("estimation failed: {0}")]
    Estimation(String),
    /// The requested conversion does not exist for the source model. Exit code 5.
    #[error("unsupported request: {0}")]
    Unsupported(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Estimation(_) => 4,
            CliError::Unsupported(_) => 5,
        }
    }

    /// Model-defect errors (instability, singular `G₀`) map to exit code 3,
    /// everything else to an input error.
    pub fn from_model(err: KronError) -> Self {
        match err {
            KronError::Unstable { .. } | KronError::SingularG0 { .. } | KronError::IllConditioned(_) => {
                CliError::Numerical(format!("{}: {err}", err.name()))
            }
            other => CliError::Input(format!("{}: {other}", other.name())),
        }
    }

    /// Any library error raised inside an estimator.
    pub fn from_estimation(err: KronError) -> Self {
        CliError::Estimation(format!("{}: {err}", err.name()))
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}
