//! Top-down fully convolutional encoder-decoder network for contour
//! detection, trained with deep side supervision and class-balanced
//! cross-entropy, plus the boundary evaluation harness used to score it.

pub mod data;
pub mod error;
pub mod cli;
pub mod evaluation;
pub mod gradcheck;
pub mod inference;
pub mod layers;
pub mod loss;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{concat_channels, split_channels, Float, Precision, Shape, Tensor};
