//! Tally-based similarity analysis for image ensembles.
//!
//! The library binarizes per-image feature values against tolerance
//! intervals derived from archetype ensembles and tallies them into the
//! weighted similarity index, alongside the distance and divergence
//! baselines the tally is compared against. Two stochastic phantom
//! generators and a two-dimensional PCA reconstruction harness produce
//! controlled test data with known ground truth.

pub mod baselines;
pub mod error;
pub mod features;
pub mod image;
pub mod imgproc;
pub mod pca2d;
pub mod phantom;
pub mod similarity;
pub mod tolerance;

pub use error::{Error, Result};
