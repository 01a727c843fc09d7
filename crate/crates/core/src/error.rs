use thiserror::Error;

/// Errors raised by optimizers, the oracle, the harness and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter or problem specification is outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments violating its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A non-finite input or a singular denominator.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Fixed-point iteration hit its iteration cap.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{name}[{i}] is not finite ({})",
            values[i]
        )));
    }
    Ok(())
}
