//! Variational SGD optimizers.
//!
//! - [`vsgd`]: VSGD, gradient denoising by stochastic variational inference
//!   on a Gamma–Gaussian model, plus the mini-batch form that treats samples
//!   separately.
//! - [`constant`]: Constant VSGD, the fixed variance-ratio variant and its
//!   correspondences with Adam, SGD with momentum and AMSGrad.
//! - [`second_order`]: Second-order VSGD with a latent curvature term.
//! - [`baselines`]: SGD, SGD with momentum, Adam, AMSGrad, Normalized SGD.
//! - [`oracle`]: brute-force coordinate ascent on the single-observation
//!   mean-field objective, used to check the closed-form updates.
//! - [`bench`]: synthetic problems, a seeded training loop and metrics.
//! - [`verify`]: the property suites run by `vsgd verify`.
//! - [`cli`]: the `vsgd` command-line front end and CSV trace format.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod constant;
pub mod error;
pub mod optim;
pub mod oracle;
pub mod second_order;
pub mod special;
pub mod verify;
pub mod vsgd;

pub use error::{Error, Result};
pub use optim::{Optimizer, StateSummary};
