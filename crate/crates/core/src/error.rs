use std::path::PathBuf;

use thiserror::Error;

use crate::energy::VectorField;

/// Errors produced by the library. Each variant maps onto one exit-code class
/// of the command-line driver (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("packing error: {0}")]
    Packing(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("study error: {0}")]
    Study(String),

    #[error("coercivity lost: {0}")]
    Coercivity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("descent stalled after {iterations} iterations (gradient density {gradient_norm:.3e})")]
    StalledDescent {
        iterations: usize,
        gradient_norm: f64,
        last: Box<VectorField>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit status used by the `ferronema` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) | Error::Io { .. } => 2,
            Error::Resolution(_) | Error::Packing(_) => 4,
            _ => 3,
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Geometry(_) => "geometry",
            Error::Config(_) => "config",
            Error::Packing(_) => "packing",
            Error::Resolution(_) => "resolution",
            Error::Domain(_) => "domain",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Study(_) => "study",
            Error::Coercivity(_) => "coercivity",
            Error::Numerical(_) => "numerical",
            Error::StalledDescent { .. } => "stalled_descent",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
