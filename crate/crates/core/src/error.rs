use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverNotConverged { iterations: usize, residual: f64 },

    #[error("non-finite values produced ({0})")]
    Divergence(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Solver failure inside the optimizer; `history` holds J of the completed iterations.
    #[error("optimizer iteration {iteration}: {source}")]
    Optimizer {
        iteration: usize,
        history: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("tau index {index} outside 0..={n_steps}")]
    TauOutOfRange { index: usize, n_steps: usize },

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed field file {path}: {message}")]
    FieldFormat { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical solvers (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::SolverNotConverged { .. } | Error::Divergence(_) => true,
            Error::Step { source, .. } | Error::Optimizer { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}
