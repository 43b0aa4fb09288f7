//! Geometry of generative model inversion on synthetic manifolds.
//!
//! The crate provides a small reverse-mode autodiff engine, tangent-space
//! projectors built from generator jacobians, alignment scores between loss
//! gradients and those tangent spaces, alignment-aware classifier training,
//! and latent-space inversion attacks with perturbation- or
//! transformation-averaged gradients.

pub mod autodiff;
pub mod data;
mod error;
pub mod experiments;
pub mod geometry;
pub mod inversion;
pub mod metrics;
pub mod models;
pub mod par;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
