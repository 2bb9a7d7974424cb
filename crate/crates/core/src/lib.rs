//! AclNet: an end-to-end convolutional audio classifier over raw waveforms.
//!
//! A strided 1-D convolution front-end turns samples into a 64-channel
//! feature map at 10 ms frames, which a VGG-style 2-D stack classifies.
//! Every convolution past the first of each stage may be a standard or a
//! depthwise separable block, and a width multiplier scales the 2-D stack.

pub mod audio;
pub mod builder;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod layers;
pub mod mixup;
pub mod model;
pub mod store;
pub mod tensor;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use tensor::{Real, Shape, Tensor};
