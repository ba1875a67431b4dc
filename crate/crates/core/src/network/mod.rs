//! The four surrogate variants (VGG or residual backbone, with or without
//! the physical-information side chain), their checkpoints and the fusion
//! gradient probe.

mod checkpoint;
mod fusion;
mod model;
mod spec;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_for, read_header, save_checkpoint, Checkpoint,
    CheckpointHeader, TensorEntry, TensorKind, Weights, CHECKPOINT_MAGIC,
};
pub use fusion::{fusion_gradient_probe, FusionGradient, FusionMode, FusionNeuron};
pub use model::{broadcast_planes, fuse, Broadcast, Model, PixelAffine};
pub use spec::{Activation, Backbone, InputRepr, LayerCount, ModelSpec};

use crate::geometry::ContributionMatrix;
use crate::nn::{Scalar, Tensor};

/// The contribution matrix as an `(n, numz, numr)` feature block.
pub fn cmatrix_block<T: Scalar>(cmatrix: &ContributionMatrix) -> Tensor<T> {
    Tensor::from_vec(
        &[cmatrix.n(), cmatrix.numz(), cmatrix.numr()],
        cmatrix.weights().iter().map(|w| T::from_f64(*w)).collect(),
    )
}
