//! Gradient estimation for expectations over factorized Bernoulli variables.
//!
//! The crate provides a family of score-function gradient estimators — from
//! plain REINFORCE through leave-one-out baselines to double control variates
//! that recycle per-sample objective gradients — together with exact
//! enumeration oracles for small dimensions and a training harness that runs
//! the estimators on a quadratic toy problem and a small discrete-latent
//! variational autoencoder.
//!
//! Layering, bottom to top:
//!
//! * [`math`], [`error`] — shared numeric kernels and the error type;
//! * [`bernoulli`] — logits, samples, scores, and log-probabilities;
//! * [`objective`], [`mlp`], [`vae`] — black-box objectives, from a closed-form
//!   quadratic to an MLP-decoder ELBO;
//! * [`estimators`] — the estimator family, each returning the affine split
//!   g(alpha) = u + alpha * v;
//! * [`adam`], [`alpha`] — the optimizer and the control-variate strength.

pub mod adam;
pub mod alpha;
pub mod bernoulli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod math;
pub mod metrics;
pub mod mlp;
pub mod objective;
pub mod oracle;
pub mod train;
pub mod vae;

pub use error::{Error, Result};
