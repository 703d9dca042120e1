//! Minimal reverse-mode automatic differentiation over dense NCHW tensors.
//!
//! A [`Graph`] records every operation eagerly; [`Graph::backward`] walks the
//! tape in reverse. Everything is generic over [`Float`] so the same network
//! code can run in `f32` for training and `f64` for gradient checks.

mod float;
mod graph;
pub mod gradcheck;
mod ops;
mod optim;
mod params;
mod tensor;

pub use float::{gemm, Float};
pub use graph::{Gradients, Graph, Op, Var};
pub use ops::{conv2d_reference, plane_stats, Conv2dSpec};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unknown parameter {0}")]
    Missing(String),
}
