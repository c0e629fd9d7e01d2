use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("active-set iteration limit ({0}) reached")]
    MaxIterations(usize),

    #[error("Riccati iteration did not converge after {0} steps")]
    NoConvergence(usize),

    #[error("shifted certificate is identically zero")]
    ShiftProducedZero,

    #[error("branch-and-bound node cap ({0}) exceeded")]
    IterationCapExceeded(usize),

    #[error("enumeration guard exceeded: {0} binaries (limit {1})")]
    GuardExceeded(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error("cut store snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
