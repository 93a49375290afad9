//! Dense tensors, im2col convolution and a small reverse-mode autodiff
//! engine, all generic over [`Scalar`] (`f32` or `f64`).

pub mod conv;
mod graph;
pub mod optim;
mod param;
mod scalar;
mod tensor;

pub use conv::ConvGeometry;
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use param::{Param, ParamSet};
pub use scalar::Scalar;
pub use tensor::Tensor;
