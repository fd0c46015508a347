use thiserror::Error;

/// Errors raised by the filtering engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate direction: norm {norm:e} below threshold")]
    DegenerateDirection { norm: f64 },

    #[error("tensor not symmetric: max asymmetry {asymmetry:e}")]
    Symmetry { asymmetry: f64 },

    #[error("value {value} outside range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "invariant violated at t={t}: cell {cell} has min eigenvalue {min_eig:e} < predicted bound {bound:e}"
    )]
    Invariant {
        t: f64,
        cell: usize,
        min_eig: f64,
        bound: f64,
    },

    #[error("trace fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
