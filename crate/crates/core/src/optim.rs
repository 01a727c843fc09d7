//! The stateful optimizer interface shared by every method in the crate.
//!
//! Each optimizer module exposes pure functions over explicit state (for
//! testing and verification) plus a struct implementing [`Optimizer`] that
//! updates parameters in place (for the benchmark harness).

use crate::error::Result;

/// Per-step summary of optimizer-specific state, used for trace rows.
///
/// Fields are `None` for optimizers that do not carry the corresponding
/// quantity (e.g. Adam has no Gamma rates).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StateSummary {
    pub mean_b_g: Option<f64>,
    pub mean_b_ghat: Option<f64>,
    pub mean_sigma2: Option<f64>,
    /// Smallest value among all rates and variances in the state.
    pub min_positive: Option<f64>,
    /// Shared Gamma shape parameter, when the method has one.
    pub shape: Option<f64>,
}

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Number of parameters the state was initialized for.
    fn dim(&self) -> usize;

    fn learning_rate(&self) -> f64;

    fn set_learning_rate(&mut self, lr: f64);

    /// Consumes one noisy gradient and moves `theta` in place.
    fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()>;

    fn summary(&self) -> StateSummary {
        StateSummary::default()
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn min(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}
