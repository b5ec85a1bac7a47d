//! Structure selection for one-hidden-layer perceptrons.
//!
//! The crate trains sigmoid-hidden-layer / linear-output networks with a
//! robust Levenberg–Marquardt solver, then shrinks them with three pruning
//! algorithms (whole-entity `engel`, weight-by-weight `engel_mod`, and the
//! trial-retrain `n2pfa`) plus their sequential combination, and provides a
//! multi-seed experiment harness that compares the four on equal footing.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the type aliases
//! at the crate root fix `f64`, which is what the CLI uses.

pub mod datagen;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod mlp;
pub mod prune;
pub mod scalar;
pub mod stats;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Model specialized to the CLI's scalar type.
pub type Model = mlp::MlpModel<f64>;

/// Dataset specialized to the CLI's scalar type.
pub type Dataset = dataset::Dataset<f64>;
