//! Reverse-mode automatic differentiation over 64-bit tensors, with the layer
//! set a DCGAN needs (strided convolution, transposed convolution, batch
//! normalization, the usual activations) and the Adam optimizer.

mod adam;
mod batchnorm;
pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use batchnorm::RunningStats;
pub use tape::{row_softmax, Tape};
pub use tensor::Tensor;

use thiserror::Error;

/// Whether batch statistics are computed from the batch (training) or read
/// from running estimates (evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected a scalar tensor, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
