//! Bayesian additive functional model for longitudinal performance data.
//!
//! Each observation is decomposed as a smooth athlete curve expanded in
//! B-splines, a seasonal random intercept with GARCH(1,1) (or AR(1)) errors,
//! a linear covariate term and Gaussian noise. The posterior is explored with
//! a blocked Gibbs sampler.

pub mod aswam;
pub mod basis;
pub mod config;
pub mod dataset;
pub mod draws;
pub mod error;
pub mod factor;
pub mod numerics;
pub mod posterior;
pub mod regression;
pub mod sampler;
pub mod seasonal;
pub mod synth;

pub use error::{Error, Result};
