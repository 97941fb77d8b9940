//! Differentiable layers with analytic backward passes.
//!
//! Each layer comes as a pair: pure `*_forward` / `*_backward` functions that
//! take every input explicitly, and a small stateful struct that owns its
//! parameters and caches what its backward pass needs. The graph uses the
//! structs; gradient checks exercise both.

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod pool;
mod upsample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, Relu, Sigmoid};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNorm2d, BatchNormCache, DEFAULT_EPS as BN_DEFAULT_EPS,
    DEFAULT_MOMENTUM as BN_DEFAULT_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads};
pub use dropout::{dropout, dropout_mask, Dropout, DEFAULT_RATE as DEFAULT_DROPOUT_RATE};
pub use pool::{maxpool2x2, maxpool_backward, MaxPool2x2, PoolIndices};
pub use upsample::{bilinear_backward, bilinear_upsample, AxisWeights, BilinearKernel, Upsample};

/// Whether a layer runs with training behavior (batch statistics, dropout)
/// or inference behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Infer,
}
