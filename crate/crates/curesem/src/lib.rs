//! Mixture cure-rate survival modelling with exponentiated-Weibull lifetimes.
//!
//! The population is a two-component mixture: a cured fraction that never
//! experiences the event and a susceptible fraction whose lifetimes follow an
//! exponentiated-Weibull distribution. Cure probabilities are tied to
//! covariates through a logistic link, and the model is estimated from
//! right-censored data by either a deterministic EM algorithm or a stochastic
//! EM variant that imputes latent cure labels and residual lifetimes.
//!
//! Module map:
//! - [`ew`]: exponentiated-Weibull density/distribution kernels, quantiles,
//!   moments, hazard-shape classification and sampling.
//! - [`model`]: mixture parameters, datasets and the observed-data
//!   log-likelihood.
//! - [`optim`]: Nelder–Mead maximisation and numeric derivatives over a
//!   log-transformed parameter space.
//! - [`em`]: the deterministic EM engine.
//! - [`sem`]: the stochastic EM engine (imputation, chains, selection rules).
//! - [`inference`]: standard errors, confidence intervals, likelihood-ratio
//!   tests and AIC across the nested sub-families.
//! - [`simgen`]: simulation designs, data generation and Monte Carlo drivers.
//! - [`data`]: CSV ingestion, Kaplan–Meier curves and data-driven initial
//!   values.

pub mod data;
pub mod em;
pub mod error;
pub mod ew;
pub mod inference;
pub mod model;
pub mod optim;
pub mod sem;
pub mod simgen;

pub(crate) mod numeric;

pub use error::{Error, Result};
