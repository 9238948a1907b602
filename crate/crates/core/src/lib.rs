pub mod bottleneck;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod model;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
