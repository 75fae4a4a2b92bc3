//! Dense row-major `f64` tensors and a tape-based reverse-mode
//! differentiator with the operations needed by the detection models.

mod error;
pub mod gradcheck;
pub mod gradsuite;
mod graph;
mod ops;
mod param;
pub mod rng;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Precision, Var};
pub use ops::{BatchStats, BnMode, GruWeights};
pub use param::{fan_in_uniform, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
