use thiserror::Error;

use crate::stationary::FieldSolution;

/// Failure modes shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change on [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("accuracy target not reached: {0}")]
    Accuracy(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        last: Option<Box<FieldSolution>>,
    },
    #[error("step size underflow at z = {0}")]
    Stiffness(f64),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that stem from the inputs rather than from a numerical method.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Range(_) | Error::Domain(_))
    }
}
