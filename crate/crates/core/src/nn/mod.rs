//! Minimal CPU tensor and layer library used by the surrogate networks.
//!
//! Layers implement explicit forward/backward passes; there is no tape.
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and is probed against finite differences in `f64`.

mod blocks;
mod layers;
mod tensor;

pub use blocks::{conv_unit, ResidualBlock, Sequential};
pub use layers::{
    sigmoid, softplus, AdaptiveMaxPool2d, BatchNorm2d, Conv2d, Flatten, Layer, Linear, MaxPool2d,
    Relu, Softplus,
};
pub use tensor::{Buffer, Param, Scalar, Tensor};

