//! Classifiers, generators and classification losses.

mod classifier;
mod generator;
mod loss;

pub use classifier::{argmax, ClassLoss, Classifier, Decomposition};
pub use generator::{Generator, GeneratorKind, OracleConfig};
pub use loss::{log_softmax, softmax, LossKind};
