//! Audio classification over spectral point clouds.

pub mod cli;
pub mod error;
pub mod models;
pub mod pointcloud;
pub mod scalar;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use models::{Classifier, ModelSpec};
pub use tensor::{Tape, Tensor, Var};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Tape64 = Tape<f64>;
pub type Classifier64 = Classifier<f64>;
pub type Classifier32 = Classifier<f32>;
