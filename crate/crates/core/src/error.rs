use std::path::Path;

use rsp_solver::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("factor out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("solver failure: {0}")]
    SolveFailed(String),
    #[error("model has {vars} variables, above the cap of {cap}")]
    SizeCap { vars: usize, cap: usize },
    #[error("critical set is not invariant: objective {got} vs full {expected} (tol {tol})")]
    NotInvariant { got: f64, expected: f64, tol: f64 },
    #[error("guarantee loop exhausted after {guesses} guesses; essential-set sizes {history:?}")]
    GuessCapExceeded { guesses: usize, history: Vec<usize> },
    #[error("no sample size up to {cap} reaches the target risk level")]
    NoSampleSize { cap: u64 },
}

impl CoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
