use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {atoms} atoms")]
    LabelOutOfRange { label: usize, atoms: usize },

    #[error("infeasible marginals: total mass differs by {0:e}")]
    InfeasibleMarginals(f64),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("empty sample set: {0}")]
    EmptySamples(String),

    #[error("training diverged at epoch {epoch}: loss {loss} exceeds 10x initial {initial}")]
    Diverged {
        epoch: usize,
        loss: f64,
        initial: f64,
    },

    #[error("atom pair ({source_atom} -> {target_atom}): {inner}")]
    AtomPair {
        source_atom: usize,
        target_atom: usize,
        inner: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported codebook version {0}")]
    Version(u32),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
