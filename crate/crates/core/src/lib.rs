//! Attention kernels with verified forward and backward passes.
//!
//! The crate provides three attention variants behind one dispatch point:
//! the quadratic softmax reference, normalized affine-kernel linear
//! attention, and its denominator-free form, together with brute-force
//! oracles, finite-difference gradient checking, log-log power-law
//! fitting, and a desk-scale contrastive dual-encoder trainer.
//!
//! All numerics route transcendental functions through `libm`, so results
//! are bit-identical across platforms and across `std`/`no_std` builds.
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! only adds `std::error::Error` for [`Error`].

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attention;
pub mod clip;
pub mod error;
pub mod fit;
pub mod matrix;
pub mod oracle;
pub mod rng;

mod real;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use real::{Precision, Real};
pub use rng::{Dist, RngState};
