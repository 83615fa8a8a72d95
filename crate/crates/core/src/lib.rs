//! Preference-aligned pairwise ranking for out-of-distribution detection on
//! fixed embedding vectors.
//!
//! The library trains a small scoring head on top of frozen embeddings with a
//! Bradley-Terry pairwise objective whose minimizer ranks in-distribution
//! samples below out-of-distribution ones, i.e. it directly optimizes AUROC.
//! Alongside the ranking detector it ships six classical baselines (MSP,
//! ODIN, Energy, Mahalanobis, KNN, LOF), threshold-free metrics
//! (AUROC/AUPR/FPR95), and synthetic Gaussian worlds with closed-form
//! posteriors for verifying the optimality properties of the loss at desk
//! scale.
//!
//! Everything is deterministic: one fixed PRNG, explicit seeds in every
//! artifact, and byte-identical outputs for identical configurations.

// Dense kernels index several buffers in lockstep, parameter validation uses
// negated float comparisons as NaN guards, and special-function coefficients
// keep their published digit counts.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod head;
pub mod metrics;
pub mod numerics;
pub mod pairloss;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
