//! Wallet-level daily transaction panels and zero-inflated Gamma panel models.
//!
//! The pipeline runs in four stages:
//!   1. `ingest` — parse exported transfer records, classify assets, aggregate
//!      to an m×n daily panel with standardized macro covariates;
//!   2. `model` + `fit` — maximize the zero-inflated Gamma log-likelihood with
//!      wallet fixed effects, natural-cubic-spline temporal terms, and
//!      covariate slopes via L-BFGS with analytic gradients;
//!   3. `bootstrap` — parametric-bootstrap simultaneous confidence bands for
//!      the fitted spline curves, calibrated by the sup-deviation statistic;
//!   4. `analysis` — descriptive series, intercept skewness, window summaries,
//!      and plot-ready CSV exports.
//!
//! Numeric code is generic over the scalar type through [`real::Real`];
//! concrete `f64` aliases live at the crate root.

pub mod analysis;
pub mod basis;
pub mod bootstrap;
pub mod cli;
pub mod config;
pub mod error;
pub mod fit;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod real;
pub mod special;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Default scalar type for the pipeline.
pub type Scalar = f64;

pub type SplineBasis64 = basis::SplineBasis<Scalar>;
pub type Panel64 = ingest::Panel<Scalar>;
pub type ParameterSet64 = model::ParameterSet<Scalar>;
pub type ModelSpec64 = model::ModelSpec<Scalar>;
pub type FitResult64 = fit::FitResult<Scalar>;
pub type BandResult64 = bootstrap::BandResult<Scalar>;
