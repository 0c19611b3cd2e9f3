use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("model has integer variables; use solve_mip")]
    IntegerInLp,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}
