//! Covariance-parameter estimation for Gaussian processes on random spatial
//! designs: Maximum Likelihood and virtual leave-one-out Cross Validation
//! estimators for the Matérn family with a fixed nugget, the normalized
//! Kullback-Leibler divergence and integrated square prediction error quality
//! criteria, and a reproducible Monte Carlo experiment harness around them.

pub mod bessel;
pub mod cli;
pub mod config;
pub mod criteria;
pub mod estimators;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod report;
pub mod sampling;

mod error;

pub use error::GpError;

/// Lower bound on the model-family nugget variance. The parametric family
/// keeps `delta >= C_INF` so every model covariance matrix has smallest
/// eigenvalue at least `C_INF`, which bounds the eigenvalues of its inverse.
pub const C_INF: f64 = 0.01;
