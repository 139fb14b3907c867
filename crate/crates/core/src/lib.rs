//! Compressed-domain prior-guided super-resolution.
//!
//! A small deterministic NCHW tensor engine with reverse-mode gradients, the
//! network built on it (prior-guided side branch, pixel-adaptive convolution
//! driven by the codec partition map, U-net with attention fusion and
//! re-parameterizable convolution blocks), the partitioned focal frequency
//! loss, evaluation metrics, and a toy intra codec that produces the coding
//! priors the network consumes.
//!
//! The crate is `no_std` and only needs `alloc`. Enable the `std` feature to
//! let the GEMM backend use runtime CPU feature detection.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod augment;
pub mod codec;
pub mod conv;
mod error;
pub mod fft;
pub mod gradcheck;
pub mod graph;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod pac;
mod real;
pub mod reparam;
pub mod resample;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Shape, Tensor};
