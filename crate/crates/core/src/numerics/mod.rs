//! Tensor containers, a reverse-mode differentiation graph, and ADAM.
//!
//! Everything in here is generic over [`Scalar`] so the same graph code
//! runs in f32 for training throughput and in f64 for gradient checks.

mod adam;
mod graph;
mod scalar;
mod tensor;

pub use adam::{AdamParams, AdamState};
pub(crate) use graph::kernels;
pub use graph::{DiffNode, Graph, NodeId};
pub use scalar::Scalar;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("backward needs a single-element root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },
}
