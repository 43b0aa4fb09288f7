//! Tangent spaces of generator manifolds and gradient alignment.

mod projector;
mod svd;

pub use projector::{
    alignment_score, project, random_baseline, tangent_projector, unnormalized_push,
    AlignmentScore, Projector, ProjectorRecord, RANK_TOL,
};
pub use svd::ThinSvd;
