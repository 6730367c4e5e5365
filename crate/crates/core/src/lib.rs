//! Sharp variance bounds for regression-adjusted average treatment effect
//! estimators in finite-population randomized experiments.
//!
//! The unidentified part of the variance of an adjusted estimator is the
//! cross-moment between treated and control adjusted potential outcomes. Given
//! only the two observed marginals, that cross-moment is bounded above by the
//! comonotone coupling and below by the countermonotone coupling; plugging the
//! arm-wise empirical distributions into those bounds gives variance estimates
//! that are never larger than the Cauchy–Schwarz or conventional (Neyman)
//! estimators.

pub mod adjust;
pub mod cli;
pub mod diagnostics;
pub mod empirical;
pub mod error;
pub mod io;
pub mod simulate;
pub mod variance;

pub use error::{Error, Result};
