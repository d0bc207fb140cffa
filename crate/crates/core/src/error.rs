use thiserror::Error;

/// Errors surfaced by problem validation, propagation, assembly, and the
/// optimizer. Numerical tolerances that triggered a rejection are carried in
/// the variant so callers can report actionable diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("matrix not Hermitian: residual {resid:.3e} exceeds tolerance {tol:.3e}")]
    NotHermitian { resid: f64, tol: f64 },

    #[error("matrix not unitary: residual {resid:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { resid: f64, tol: f64 },

    #[error("averaging grid must subdivide the pulse grid: M = {m} is not a multiple of N = {n}")]
    GridMismatch { m: usize, n: usize },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("dual subproblem infeasible: {0}")]
    DualInfeasible(String),

    #[error("linear algebra backend failure: {0}")]
    Lapack(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;
