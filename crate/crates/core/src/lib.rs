//! Nonparametric signal-detection tests in the Gaussian sequence model and
//! the density model on [0, 1].
//!
//! The crate covers quadratic, kernel, χ² and Cramér–von Mises tests, the
//! geometry of Besov balls (seminorm, membership, metric projection), the
//! asymptotically minimax quadratic test design and a seeded Monte Carlo
//! harness that compares empirical error rates with the Gaussian
//! approximations.

pub mod chisq;
pub mod cvm;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod minimax;
pub mod model;
pub mod numeric;
pub mod quadratic;
pub mod report;

pub use error::{Error, Result};
