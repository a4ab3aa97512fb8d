//! Error types shared across the workspace.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes do not compose for the attempted operation.
    #[error("{op}: dimension mismatch, left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// Bad argument or configuration value.
    #[error("validation: {0}")]
    Validation(String),

    /// An iterative routine ran out of iterations.
    #[error("{what} did not converge after {iterations} iterations (last gap {last_gap:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last_gap: f64,
    },

    /// A training loop produced a non-finite loss.
    #[error("divergence at iteration {iteration}, last finite loss {last_loss:e}")]
    Divergence { iteration: usize, last_loss: f64 },

    /// Generic numerical failure (NaN gradient, non-PSD input, ...).
    #[error("numerical: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
