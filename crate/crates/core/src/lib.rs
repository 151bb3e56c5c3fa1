//! Stochastic processes as arrows: shared-noise, independent-noise and
//! parameterized composition, pushforward kernels, Gaussian closure,
//! likelihoods and a gradient-descent learner.

pub mod arrow_spec;
pub mod arrows;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod kernels;
pub mod learn;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod sample_space;
pub mod stats;

pub use error::{Error, Result};
