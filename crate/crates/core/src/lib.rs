pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Float, Tensor};
pub mod arch;
pub mod augment;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod ensemble;
pub mod labels;
