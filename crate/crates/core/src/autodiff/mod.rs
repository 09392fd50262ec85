//! Minimal reverse-mode automatic differentiation over dense f64 tensors.
//!
//! The operator inventory covers what the forecasting model needs: matrix
//! products, elementwise arithmetic and activations, softmax, layer norm,
//! dropout, concat/slice/reshape plumbing, and row lookups. Double precision
//! is the working type so finite-difference oracles have headroom.

mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use ops::concat;
pub use tensor::Tensor;
