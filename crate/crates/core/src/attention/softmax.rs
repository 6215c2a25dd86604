//! Reference softmax attention, the quadratic baseline.
//!
//! Scores are Q K^T / sqrt(D); the causal mask sets entries above the
//! diagonal to negative infinity before the softmax, which is safe under
//! per-row max subtraction.

use crate::error::Result;
use crate::matrix::Matrix;
use crate::real::Real;

use super::{check_grad_shape, check_qkv_shapes};

/// O = softmax(Q K^T / sqrt(D)) V. O(N^2 D) time, O(N^2) memory.
pub fn forward<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
) -> Result<Matrix<T>> {
    check_qkv_shapes("softmax_attention_forward", q, k, v)?;
    let mut attn = raw_scores(q, k, causal)?;
    attn.softmax_rows_in_place();
    attn.matmul(v)
}

/// The softmax-normalized attention matrix itself. Debug accessor used to
/// check row-stochasticity; the forward pass never exposes it.
pub fn scores<T: Real>(q: &Matrix<T>, k: &Matrix<T>, causal: bool) -> Result<Matrix<T>> {
    check_qkv_shapes("softmax_attention_scores", q, k, q)?;
    let mut attn = raw_scores(q, k, causal)?;
    attn.softmax_rows_in_place();
    Ok(attn)
}

/// Analytic gradients of [`forward`] with respect to Q, K, and V.
pub fn backward<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    check_qkv_shapes("softmax_attention_backward", q, k, v)?;
    check_grad_shape("softmax_attention_backward", q, d_out)?;
    let n = q.rows();
    let scale = T::ONE / T::from_f64(q.cols() as f64).sqrt();

    let mut attn = raw_scores(q, k, causal)?;
    attn.softmax_rows_in_place();

    let d_v = attn.transpose()?.matmul(d_out)?;

    // Softmax Jacobian per row: dS = A * (dA - rowdot(dA, A)).
    // Masked entries have A = 0, so their dS vanishes automatically.
    let mut d_scores = d_out.matmul(&v.transpose()?)?;
    for i in 0..n {
        let a_row = attn.row(i);
        let d_row = d_scores.row_mut(i);
        let mut row_dot = T::ZERO;
        for (&da, &a) in d_row.iter().zip(a_row) {
            row_dot += da * a;
        }
        for (ds, &a) in d_row.iter_mut().zip(a_row) {
            *ds = a * (*ds - row_dot) * scale;
        }
    }

    let d_q = d_scores.matmul(k)?;
    let d_k = d_scores.transpose()?.matmul(q)?;
    Ok((d_q, d_k, d_v))
}

fn raw_scores<T: Real>(q: &Matrix<T>, k: &Matrix<T>, causal: bool) -> Result<Matrix<T>> {
    let scale = T::ONE / T::from_f64(q.cols() as f64).sqrt();
    let mut s = q.matmul(&k.transpose()?)?;
    let n = s.rows();
    for i in 0..n {
        let row = s.row_mut(i);
        for v in row.iter_mut() {
            *v *= scale;
        }
        if causal {
            for v in row[i + 1..].iter_mut() {
                *v = T::neg_infinity();
            }
        }
    }
    Ok(s)
}
