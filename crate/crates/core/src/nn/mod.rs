//! Dense tensors and the layers of the reconstruction network, each with a
//! hand-written backward pass.

pub mod activation;
pub mod adamax;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod layers;
pub mod loss;
mod real;
mod tensor;
#[cfg(test)]
pub(crate) mod testutil;

pub use adamax::{AdamaxConfig, AdamaxState};
pub use conv::ConvGeom;
pub use layers::{BatchNorm, Conv2d, ConvTranspose2d, Dense, Layer, Param, Sequential};
pub use real::Real;
pub use tensor::Tensor;
