//! A small tape-based reverse-mode autodiff over dense `f64` tensors.
//!
//! Build a [`Graph`] per forward pass, register parameters as leaves, call
//! [`Graph::backward`] on a scalar loss and read leaf gradients back.

mod check;
mod checkpoint;
mod graph;
mod ops;
mod optim;
mod tensor;
#[cfg(test)]
mod tests;

pub use check::{gradcheck, GRADCHECK_STEP};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use graph::{Graph, Var};
pub use ops::LOGLOSS_CLIP;
pub use optim::{clip_global_norm, Adam, AdamConfig, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{len} values cannot fill shape {shape:?}")]
    BadLength { shape: Vec<usize>, len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
