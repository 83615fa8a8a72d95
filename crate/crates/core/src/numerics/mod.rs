//! Minimal deterministic numerics shared by every other module: dense
//! row-major matrices, stable scalar transforms, a seeded PRNG, and a
//! Cholesky solver. Everything is 64-bit floats; shape mismatches are hard
//! errors, never broadcasts.

mod linalg;
mod matrix;
mod rng;
mod scalar;

pub use linalg::{cholesky, cholesky_logdet, cholesky_solve};
pub use matrix::Matrix;
pub use rng::{Rng, RngAlgorithm};
pub use scalar::{log1pexp, logsumexp, normal_cdf, normal_quantile, sigmoid};
