//! Reverse-mode differentiation over dense `f64` tensors.

mod map;
mod mlp;
mod tape;
mod tensor;

pub use map::{
    evaluate, finite_difference_jacobian, grad_check, gradient, jacobian, jacobian_with_limit,
    DiffMap, FnMap, Identity, Trace, JACOBIAN_LIMIT,
};
pub use mlp::{Activation, Checkpoint, Layer, LayerSpec, Mlp, ParamBlob};
pub use tape::{CustomOp, Op, Tape, Var};
pub use tensor::{dot, norm, Tensor};
