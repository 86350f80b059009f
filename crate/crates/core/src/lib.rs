//! Rank-regularized multimodal sequence learning.
//!
//! The crate is `no_std` (with `alloc`) and contains only the numerical
//! machinery:
//!
//! * [`tensor`]: dense order-M tensors, CP factor sets and the multilinear
//!   primitives (outer product, mode unfolding, Khatri-Rao product).
//! * [`cp`]: CP decomposition by alternating least squares and the
//!   reconstruction-error rank diagnostic.
//! * [`rankreg`]: matrix nuclear norm, the Frobenius upper bound on the tensor
//!   nuclear norm and the implicit (Gram identity) fused-tensor norm.
//! * [`neural`]: LSTM encoders, the temporal tensor fusion model and its
//!   baselines, exact gradients and the training loop.
//! * [`noise`]: random and structured feature dropping.
//! * [`synth`]: a synthetic low-rank multimodal sequence generator.
//!
//! File formats, checkpoints and the command line live in the `rankfuse`
//! companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cp;
mod error;
pub mod linalg;
pub mod matrix;
pub mod neural;
pub mod noise;
pub mod rankreg;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tensor::{CpFactors, DenseTensor};
