use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, flags or input files (exit 2).
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed (exit 3).
    #[error("numerical failure: {0}")]
    Numerical(#[from] pairlik::Error),

    /// Outputs were written but some fit did not converge (exit 4).
    #[error("{0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    /// Input problems surfaced by the library are configuration errors.
    pub fn input(e: pairlik::Error) -> Self {
        match e {
            pairlik::Error::Io(_) | pairlik::Error::Parse { .. } | pairlik::Error::Domain(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e),
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
