//! Classifier and autoencoder training, including alignment-aware training
//! whose objective rewards input gradients that lie in the data manifold's
//! tangent spaces.

mod alignment;
mod cache;
mod decoder;
mod optim;
mod train;

pub use alignment::{
    alignment_param_gradient, alignment_term, as_tr_values, bound_sides, check_bound, measure_as_tr,
    per_logit_alignment, record_alignment_from, record_alignment_term, summed_input_gradient, BoundCheck,
    BOUND_SLACK, MIN_GRADIENT_NORM,
};
pub use cache::{precompute_projectors, ProjectorCache, ProjectorSource, ProjectorSourceKind, MAX_SKIPPED_FRACTION};
pub use decoder::{principal_angles, reconstruction_mse, train_decoder, DecoderConfig, TrainedDecoder, MAX_DEGENERATE_FRACTION};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{accuracy, train_aligned, train_classifier, EpochMetrics, TrainConfig, Trained};
