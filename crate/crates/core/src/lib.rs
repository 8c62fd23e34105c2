//! Numerical laboratory for fixed points of the multivariate smoothing
//! transform `Z = Σ A_i Z_i` with nonnegative matrix weights.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cascade;
pub mod conditions;
pub mod diagnostics;
pub mod error;
pub mod examples;
pub mod grid;
pub mod io;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod support;

pub use error::{Error, Result};
pub use matrix::{Direction, NonNegMatrix};
pub use model::ModelSpec;
