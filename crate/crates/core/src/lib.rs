//! Noise-robust classification losses (generalized cross entropy and its
//! truncated form), label-noise simulation, small softmax classifiers with
//! sample pruning, and numeric checks of the losses' robustness bounds.

// `!(a < b)` is used on purpose so NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acs;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod loss;
pub mod model;
pub mod noise;
pub mod rng;
pub mod theory;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use loss::{LossConfig, LossKind, ProbVector};
