//! Discriminative orthogonal subspace embedding for visual tracking.
//!
//! A robust, dimension-adaptive subspace is learned from labelled target and
//! background patches by trading a nuclear norm against a sparse error under
//! an HSIC-style label coupling. Candidates are scored by how well the
//! subspace represents them and how a linear classifier on their embedding
//! rates them, inside a particle-filter loop.

// `!(x > 0.0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod features;
pub mod hsic;
pub mod metrics;
pub mod numerics;
pub mod representation;
pub mod sequence_io;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
