use thiserror::Error;

/// Errors raised anywhere in the witness pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("sampler exhausted {0} retries")]
    RetryExhausted(usize),
    #[error("expectation has imaginary residual {0:.3e}")]
    NonRealExpectation(f64),
    #[error("solver did not converge after {iters} iterations (residual {residual:.3e})")]
    SolverDiverged { iters: usize, residual: f64 },
    #[error("hard constraints infeasible{}: max violation {max_violation:.3e} at penalty {penalty:.3e}", group.as_ref().map(|g| format!(" for group {g}")).unwrap_or_default())]
    Infeasible {
        group: Option<String>,
        max_violation: f64,
        penalty: f64,
    },
    #[error("witness trace {0:.3e} is too small to normalize")]
    NormalizationUndefined(f64),
    #[error("stratum `{0}` is empty")]
    EmptyStratum(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("only one class present")]
    SingleClass,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
