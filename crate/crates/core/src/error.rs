use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation, planning, and file layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("query ({x}, {y}) lies outside the boundary field domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    /// The surface sits below the constraint at the listed point indices.
    #[error("infeasible state: {} point(s) violate the constraint (first: {:?})", .violating.len(), .violating.iter().take(8).collect::<Vec<_>>())]
    Infeasible { violating: Vec<usize> },

    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } | Error::OutOfDomain { .. } | Error::Invalid(_) => 2,
            Error::Infeasible { .. } | Error::Degenerate(_) => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
        }
    }
}
