//! Selective state-space forecasting with a variational minimality
//! regularizer, exact gradients, and an experiment harness for lambda
//! sweeps, robustness and invariance studies.

pub mod config;
pub mod data;
pub mod engine;
pub mod harness;
pub mod error;
pub(crate) mod linalg;
pub mod objective;
pub mod ssm;

pub use error::{Error, Result};
pub use linalg::softplus;
