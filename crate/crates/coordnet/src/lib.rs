//! A small CNN/VAE stack, written from scratch, for studying what appending
//! normalized XY coordinate channels to image input does to convolutional
//! models.
//!
//! The pieces:
//! - [`tensor`]: dense row-major tensors over f32/f64 with a shared GEMM hook.
//! - [`ops`]: conv/pool/dense/activations/losses, each with a hand-derived
//!   backward pass, plus the receptive-field step counter.
//! - [`coords`]: the normalized position grids and the 3-channel input stack.
//! - [`data`]: IDX (MNIST) parsing, splits, resolution/translation transforms.
//! - [`models`]: the 28×28 digit classifier and a convolutional VAE.
//! - [`train`]: seeded mini-batch training, evaluation, early stopping.
//! - [`checkpoint`]: checksummed binary parameter snapshots.
//! - [`gradcheck`]: finite-difference verification used by the test suite.
//!
//! Everything is deterministic given a seed: random streams derive from a
//! root key by label, reductions run in fixed order, and training is
//! single-threaded.

pub mod checkpoint;
pub mod coords;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod models;
pub mod ops;
pub mod optim;
pub mod param;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Dtype, Element, Tensor};
