pub mod cli;
pub mod datasets;
pub mod diffgrad;
pub mod error;
pub mod group_operator;
pub mod kernel_field;
pub mod lie_group;
pub mod model_zoo;
pub mod probes;
pub mod rff;
pub mod train;

pub use error::{Error, Result};
