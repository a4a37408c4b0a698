//! Minimal reverse-mode differentiation over dense `f64` arrays.
//!
//! The primitive set is exactly what the kernel network, the group operator and
//! the classifier head need. Frequencies are never differentiated.

pub mod checkpoint;
pub mod optim;
pub mod sparse;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use optim::{Adam, AdamConfig};
pub use sparse::ContractionPattern;
pub(crate) use tape::{matmul_raw, silu};
pub use tape::{Gradients, Reduce, Tape, Var, NORM_EPS};
pub use tensor::Tensor;
