pub mod cli;
pub mod dataset;
pub mod dcmb;
pub mod diffusion;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod geometry;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod postprocess;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;
