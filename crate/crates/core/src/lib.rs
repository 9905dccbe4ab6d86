//! Tensor autograd, state-space scan, rotary linear attention and the
//! Integscan forgery-localization network.

pub mod attn;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod ops;
pub mod param;
pub mod ssm;
pub mod taxonomy;
mod tensor;

pub use error::{Error, Result};
pub use graph::{CustomOp, Graph, Var, OP_KINDS};
pub use ops::activation::Activation;
pub use tensor::Tensor;
pub use taxonomy::{Modality, Split, Task};
