use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, the time loop and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("degenerate element {element}: signed area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error(
        "Newton solver did not converge in {iterations} iterations \
         (residual {residual:e}, target {target:e}); trace: {trace:?}"
    )]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        target: f64,
        trace: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("damage QP did not converge in {iterations} iterations (KKT residual {kkt:e})")]
    QpDiverged { iterations: usize, kkt: f64 },

    #[error("energy estimate violated at step {step}: {which} slack {slack:e} (scale {scale:e})")]
    EnergyEstimate {
        step: usize,
        which: &'static str,
        slack: f64,
        scale: f64,
    },

    #[error("fault stripe of height {height} m contains no element centroid")]
    EmptyStripe { height: f64 },

    #[error("empty ledger: {0}")]
    EmptyLedger(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
