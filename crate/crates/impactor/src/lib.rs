//! Bayesian structural time-series causal impact analysis for yearly
//! country-level panel data.
//!
//! The model is a local level plus a static spike-and-slab regression on
//! control series, fitted to the pre-intervention period by Gibbs sampling.
//! Posterior draws are propagated through the post period to obtain a
//! counterfactual predictive distribution, from which pointwise, cumulative,
//! average and relative causal effects are summarized with credible intervals
//! and a one-sided tail-area probability.
//!
//! Pipeline: [`panel`] (ingestion) → [`ssm`] (model assembly) → [`kalman`]
//! (exact Gaussian inference) → [`priors`] + [`sampler`] (MCMC) → [`impact`]
//! (counterfactual statistics) → [`report`] / [`analysis`] (front end).

pub mod analysis;
pub mod error;
pub mod impact;
pub mod kalman;
pub mod panel;
pub mod priors;
pub mod report;
pub mod sampler;
pub mod ssm;
pub mod stats;

pub use error::Error;

/// Crate result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Tool version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
