//! Latent-space inversion attacks and their smoothed-gradient variants.

mod run;
mod smoothing;
mod transforms;

pub use run::{
    alignment_dynamics, initial_latent, invert, invert_from, inversion_loss, latent_step, DynamicsPoint, InversionConfig,
    InversionObjective, InversionRun, LatentOptimizer, LatentStep, Smoothing, StepRecord,
};
pub use smoothing::{paa_gradient, paa_sigma, taa_gradient, LossGrad};
pub use transforms::{grid_side, Composite, Transform, TransformSet};
