//! Dense tensors with reverse-mode automatic differentiation, sized for
//! message-passing models on graphs: 2-D tensors only, no broadcasting
//! beyond scalar-tensor, graph sparsity expressed through explicit
//! gather / scatter-add index lists.
//!
//! The [`Tape`] records operations while any input requires gradients and
//! [`Tape::backward`] fills them in one reverse pass. [`engine::Engine`]
//! abstracts over taped and tape-free evaluation so a model's forward pass
//! is written once.

pub mod adam;
pub mod checkpoint;
pub mod dtype;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use dtype::Dtype;
pub use error::AdError;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
