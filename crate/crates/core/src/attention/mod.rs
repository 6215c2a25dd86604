//! Attention kernels: the quadratic softmax reference, normalized linear
//! attention, and its denominator-free variant, each with causal and
//! non-causal forms and analytic backward passes.
//!
//! All entry points take one (seq_len x head_dim) head; looping over
//! batches and heads is the caller's job, which keeps the kernels
//! identical to their single-head definitions.

pub mod linear;
pub mod softmax;

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::real::{Precision, Real};

/// The three attention computations the crate dispatches over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    /// Softmax attention with 1/sqrt(D) score scaling.
    SoftmaxReference,
    /// Affine-kernel linear attention with a row-normalizing denominator.
    LinearNormalized,
    /// Affine-kernel linear attention dividing by the constant 2 instead
    /// of a row sum.
    LinearDenomFree,
}

impl AttentionVariant {
    pub const ALL: [AttentionVariant; 3] = [
        AttentionVariant::SoftmaxReference,
        AttentionVariant::LinearNormalized,
        AttentionVariant::LinearDenomFree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AttentionVariant::SoftmaxReference => "softmax",
            AttentionVariant::LinearNormalized => "linear-normalized",
            AttentionVariant::LinearDenomFree => "linear-denomfree",
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(AttentionVariant::SoftmaxReference),
            "linear-normalized" => Ok(AttentionVariant::LinearNormalized),
            "linear-denomfree" => Ok(AttentionVariant::LinearDenomFree),
            _ => Err(Error::InvalidConfig {
                what: "variant must be one of softmax, linear-normalized, linear-denomfree",
            }),
        }
    }
}

/// Shape, masking, variant, and precision descriptor for one attention
/// call site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub batch: usize,
    pub heads: usize,
    pub seq_len: usize,
    pub head_dim: usize,
    pub causal: bool,
    pub variant: AttentionVariant,
    pub precision: Precision,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 || self.heads < 1 || self.seq_len < 1 || self.head_dim < 1 {
            return Err(Error::InvalidConfig {
                what: "batch, heads, seq_len, and head_dim must all be at least 1",
            });
        }
        Ok(())
    }
}

pub(crate) fn check_qkv_shapes<T: Real>(
    op: &'static str,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<()> {
    if q.shape() != k.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: q.shape(),
            right: k.shape(),
        });
    }
    if k.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: k.shape(),
            right: v.shape(),
        });
    }
    Ok(())
}

pub(crate) fn check_grad_shape<T: Real>(
    op: &'static str,
    q: &Matrix<T>,
    d_out: &Matrix<T>,
) -> Result<()> {
    if q.shape() != d_out.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: q.shape(),
            right: d_out.shape(),
        });
    }
    Ok(())
}

/// Single dispatch point over the three variants: forwards `q`, `k`, `v`
/// to the kernel selected by `config.variant` after checking that the
/// matrices agree with the configured shape and precision.
pub fn attention<T: Real>(
    config: &AttentionConfig,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
) -> Result<Matrix<T>> {
    config.validate()?;
    if T::PRECISION != config.precision {
        return Err(Error::InvalidConfig {
            what: "config precision does not match the matrix element type",
        });
    }
    if q.shape() != (config.seq_len, config.head_dim) {
        return Err(Error::ShapeMismatch {
            op: "attention",
            left: q.shape(),
            right: (config.seq_len, config.head_dim),
        });
    }
    match config.variant {
        AttentionVariant::SoftmaxReference => softmax::forward(q, k, v, config.causal),
        AttentionVariant::LinearNormalized => linear::forward_normalized(q, k, v, config.causal),
        AttentionVariant::LinearDenomFree => linear::forward_denomfree(q, k, v, config.causal),
    }
}

/// Variant-dispatched backward pass, the gradient counterpart of
/// [`attention`].
pub fn attention_backward<T: Real>(
    variant: AttentionVariant,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    match variant {
        AttentionVariant::SoftmaxReference => softmax::backward(q, k, v, causal, d_out),
        AttentionVariant::LinearNormalized => {
            linear::backward(q, k, v, causal, linear::LinearKind::Normalized, d_out)
        }
        AttentionVariant::LinearDenomFree => {
            linear::backward(q, k, v, causal, linear::LinearKind::DenomFree, d_out)
        }
    }
}
