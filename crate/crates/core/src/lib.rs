//! Numerical laboratory for Gaussian approximation of sums of log-concave
//! random vectors: Föllmer processes, tilted posteriors, stochastic
//! localization couplings, Stein kernels and the distance/inequality
//! estimators needed to check rates empirically.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod localization;
pub mod metrics;
pub mod parallel;
pub mod posterior;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod special;
pub mod stein;
pub mod stats;

pub use error::{Error, Result};
