//! A self-contained CPU engine for HENet-style convolutional networks.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`tensor`]: NCHW tensors with add / concat / slice.
//! - [`ops`]: grouped convolution, channel shuffle, batch norm, ReLU, FC and
//!   softmax cross-entropy, each with a backward kernel.
//! - [`arch`]: the divisor-pair group rule, stride-1/stride-2 blocks with the
//!   add+concat skip connection, and network builders.
//! - [`analyze`]: parameter / MAC counting and the reference comparison table.
//! - [`train`]: multistep schedule, Nesterov SGD, augmentation, training loop.
//! - [`data`]: CIFAR binary loaders, synthetic data, model files.
//! - [`bench`]: single-threaded forward timing.

pub mod analyze;
pub mod arch;
pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorCategory, Result};
pub use tensor::{Scalar, Shape, Tensor};
