use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff mismatch: {left} vs {right}")]
    CutoffMismatch { left: usize, right: usize },

    #[error("cutoff {cutoff} too small: coherent tail mass exceeds {tolerance:e}, need cutoff >= {required}")]
    CutoffTooSmall {
        cutoff: usize,
        required: usize,
        tolerance: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("impossible outcome: postselection probability {probability:e}")]
    ImpossibleOutcome { probability: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("oracle sequence has {len} atoms, at most {max} supported")]
    SequenceTooLong { len: usize, max: usize },

    #[error("Euler relaxation step unstable: kappa*t_a*(1+n_th)*cutoff = {value} (must be < 0.5)")]
    UnstableStep { value: f64 },

    #[error("relaxation produced negative eigenvalue below {tolerance:e}")]
    NegativeEigenvalue { tolerance: f64 },

    #[error("Wigner grid too small: extent {extent} < required {required}")]
    GridTooSmall { extent: f64, required: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
