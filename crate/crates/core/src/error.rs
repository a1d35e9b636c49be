use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or grids of the operands do not agree.
    #[error("structural error: {0}")]
    Structural(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested time step breaks a positivity condition of the scheme.
    #[error("step-size error: {reason} (admissible dt <= {admissible_dt:e})")]
    StepSize { reason: String, admissible_dt: f64 },

    /// Adaptive stepping shrank dt below the underflow threshold.
    #[error("stiffness failure at t = {t:e}: dt {dt:e} underflowed; last violation: {reason}")]
    Stiffness { t: f64, dt: f64, reason: String },

    /// A cell went negative after an accepted solve. Never clipped.
    #[error("positivity violated for {quantity} at cell {cell}: {value:e}")]
    Positivity {
        quantity: &'static str,
        cell: usize,
        value: f64,
    },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or inconsistent data read from disk.
    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
