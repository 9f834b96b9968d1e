use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the command-line tool. Each maps to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments.
    #[error("invalid configuration: {0}")]
    Validation(String),
    /// An upstream stage has not produced its artifacts yet.
    #[error("missing {what} at {}; run `orb {stage}` first", path.display())]
    MissingUpstream {
        what: &'static str,
        path: PathBuf,
        stage: &'static str,
    },
    /// Input or intermediate data could not be read or processed.
    #[error("{0}")]
    Data(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            _ => 3,
        }
    }

    pub fn data(e: impl std::fmt::Display) -> CliError {
        CliError::Data(e.to_string())
    }

    pub fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
