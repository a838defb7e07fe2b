//! Covariance estimation for stationary isotropic Gaussian random fields by
//! exact, tapered and weighted pairwise composite likelihoods.

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod predict;
pub mod simulate;

pub use error::{Error, Result};
