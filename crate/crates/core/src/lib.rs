//! Calibrated energy-based adversarial training.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of the
//! pipeline:
//!
//! - [`tabular`]: the minimax game over an explicit finite data space, a
//!   mirror-prox solver for it, closed-form optimal discriminators and a KKT
//!   certifier.
//! - [`nn`]: a small reverse-mode differentiation tape, fully-connected layers,
//!   batch normalization and Adam.
//! - [`data`]: analytic 2D Gaussian mixtures and evaluation grids.
//! - [`entropy`]: the nearest-neighbor entropy-gradient estimator and the
//!   variational conditional-entropy bound.
//! - [`trainer`]: GAN / EGAN training loops for the 2D experiments.
//! - [`eval`]: histogram estimates, discriminator renormalization and KL tables.
//!
//! File formats, configuration and the command line live in the `egan` crate.
#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod entropy;
pub mod error;
mod math;
pub mod eval;
pub mod nn;
pub mod seed;
pub mod tabular;
pub mod trainer;

pub use error::{Error, Result};
