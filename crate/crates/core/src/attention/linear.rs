//! Affine-kernel linear attention in two forms: normalized (weights sum
//! to one per row) and denominator-free (weights divided by the constant
//! 2). Queries and keys are L2-normalized inside the kernel, which keeps
//! every pairwise score `1 + q.k` in [0, 2].
//!
//! Forward and backward passes run in O(N D^2): non-causal via two matrix
//! products, causal via running accumulators over the key/value prefix.
//! The N x N score matrix is only materialized by [`scores`], which exists
//! for heatmaps and for checking the reordered paths. Accumulation orders
//! are fixed so that the causal and non-causal paths produce bit-identical
//! results on the final row, where they compute the same sum.

use alloc::vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm, Matrix, NORM_EPS};
use crate::real::Real;

use super::{check_grad_shape, check_qkv_shapes};

/// Guard threshold: a normalized-variant row denominator below this value
/// reports a degenerate input instead of dividing.
pub const DENOM_GUARD: f64 = 1e-12;

/// Which of the two linear-attention computations to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinearKind {
    /// Scores divided by the visible-row sum (weights sum to one).
    Normalized,
    /// Scores divided by the constant 2 (each weight stays in [0, 1]).
    DenomFree,
}

impl LinearKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LinearKind::Normalized => "linear-normalized",
            LinearKind::DenomFree => "linear-denomfree",
        }
    }
}

impl core::fmt::Display for LinearKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinearKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-normalized" => Ok(LinearKind::Normalized),
            "linear-denomfree" => Ok(LinearKind::DenomFree),
            _ => Err(Error::InvalidConfig {
                what: "kind must be linear-normalized or linear-denomfree",
            }),
        }
    }
}

/// Explicit N x N weight matrix: entry (i, n) is the coefficient of value
/// row `n` in output row `i`. Masked causal entries are zero. O(N^2 D);
/// used for heatmaps and as the explicit-score route in tests.
pub fn scores<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    kind: LinearKind,
    causal: bool,
) -> Result<Matrix<T>> {
    check_qkv_shapes("la_scores", q, k, q)?;
    let n = q.rows();
    let qh = q.l2_normalize_rows(T::from_f64(NORM_EPS));
    let kh = k.l2_normalize_rows(T::from_f64(NORM_EPS));
    let two = T::from_f64(2.0);

    let mut s = Matrix::zeros(n, n)?;
    for i in 0..n {
        let hi = if causal { i } else { n - 1 };
        let q_row = qh.row(i);
        let row = s.row_mut(i);
        for nn in 0..=hi {
            row[nn] = T::ONE + dot(q_row, kh.row(nn));
        }
        match kind {
            LinearKind::DenomFree => {
                for w in row[..=hi].iter_mut() {
                    *w /= two;
                }
            }
            LinearKind::Normalized => {
                let mut den = T::ZERO;
                for &w in row[..=hi].iter() {
                    den += w;
                }
                if den.to_f64().abs() < DENOM_GUARD {
                    return Err(Error::DegenerateDenominator {
                        row: i,
                        value: den.to_f64(),
                    });
                }
                for w in row[..=hi].iter_mut() {
                    *w /= den;
                }
            }
        }
    }
    Ok(s)
}

/// Normalized linear attention. Output row i is the score-weighted
/// average of the visible value rows, computed in O(N D^2) without
/// materializing the score matrix.
pub fn forward_normalized<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
) -> Result<Matrix<T>> {
    check_qkv_shapes("la_forward_normalized", q, k, v)?;
    let (n, d) = q.shape();
    let qh = q.l2_normalize_rows(T::from_f64(NORM_EPS));
    let kh = k.l2_normalize_rows(T::from_f64(NORM_EPS));
    let mut out = Matrix::zeros(n, d)?;

    if causal {
        let mut kv = vec![T::ZERO; d * d]; // sum of k_n (outer) v_n over the prefix
        let mut z = vec![T::ZERO; d]; // sum of k_n
        let mut vs = vec![T::ZERO; d]; // sum of v_n
        for i in 0..n {
            fold_outer(&mut kv, d, kh.row(i), v.row(i));
            fold_row(&mut z, kh.row(i));
            fold_row(&mut vs, v.row(i));
            let q_row = qh.row(i);
            let den = T::from_f64((i + 1) as f64) + dot(q_row, &z);
            if den.to_f64().abs() < DENOM_GUARD {
                return Err(Error::DegenerateDenominator {
                    row: i,
                    value: den.to_f64(),
                });
            }
            if i == 0 {
                // A single visible key carries weight exactly one.
                out.row_mut(0).copy_from_slice(v.row(0));
                continue;
            }
            combine_row(out.row_mut(i), &vs, q_row, &kv, d);
            for o in out.row_mut(i) {
                *o /= den;
            }
        }
    } else {
        let kv = outer_product_sum(&kh, v)?;
        let z = kh.column_sums();
        let vs = v.column_sums();
        let count = T::from_f64(n as f64);
        for i in 0..n {
            let q_row = qh.row(i);
            let den = count + dot(q_row, &z);
            if den.to_f64().abs() < DENOM_GUARD {
                return Err(Error::DegenerateDenominator {
                    row: i,
                    value: den.to_f64(),
                });
            }
            if n == 1 {
                out.row_mut(0).copy_from_slice(v.row(0));
                continue;
            }
            combine_row(out.row_mut(i), &vs, q_row, kv.data(), d);
            for o in out.row_mut(i) {
                *o /= den;
            }
        }
    }
    Ok(out)
}

/// Denominator-free linear attention: output row i is half the sum of
/// `(1 + q_i.k_n) v_n` over the visible rows. O(N D^2).
pub fn forward_denomfree<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
) -> Result<Matrix<T>> {
    check_qkv_shapes("la_forward_denomfree", q, k, v)?;
    let (n, d) = q.shape();
    let qh = q.l2_normalize_rows(T::from_f64(NORM_EPS));
    let kh = k.l2_normalize_rows(T::from_f64(NORM_EPS));
    let two = T::from_f64(2.0);
    let mut out = Matrix::zeros(n, d)?;

    if causal {
        let mut kv = vec![T::ZERO; d * d];
        let mut vs = vec![T::ZERO; d];
        for i in 0..n {
            fold_outer(&mut kv, d, kh.row(i), v.row(i));
            fold_row(&mut vs, v.row(i));
            combine_row(out.row_mut(i), &vs, qh.row(i), &kv, d);
            for o in out.row_mut(i) {
                *o /= two;
            }
        }
    } else {
        let kv = outer_product_sum(&kh, v)?;
        let vs = v.column_sums();
        for i in 0..n {
            combine_row(out.row_mut(i), &vs, qh.row(i), kv.data(), d);
            for o in out.row_mut(i) {
                *o /= two;
            }
        }
    }
    Ok(out)
}

/// Analytic gradients of the selected linear variant with respect to the
/// raw (un-normalized) `q`, `k`, and `v`, including the gradient of the
/// internal row normalization. O(N D^2).
pub fn backward<T: Real>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
    kind: LinearKind,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    check_qkv_shapes("la_backward", q, k, v)?;
    check_grad_shape("la_backward", q, d_out)?;
    let qh = q.l2_normalize_rows(T::from_f64(NORM_EPS));
    let kh = k.l2_normalize_rows(T::from_f64(NORM_EPS));

    let (d_qh, d_kh, d_v) = match kind {
        LinearKind::DenomFree => backward_denomfree(&qh, &kh, v, causal, d_out)?,
        LinearKind::Normalized => backward_normalized(&qh, &kh, v, causal, d_out)?,
    };

    let d_q = normalize_rows_backward(q, &d_qh);
    let d_k = normalize_rows_backward(k, &d_kh);
    Ok((d_q, d_k, d_v))
}

fn backward_denomfree<T: Real>(
    qh: &Matrix<T>,
    kh: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let (n, d) = qh.shape();
    let half = T::from_f64(0.5);
    let mut d_qh = Matrix::zeros(n, d)?;
    let mut d_kh = Matrix::zeros(n, d)?;
    let mut d_v = Matrix::zeros(n, d)?;

    if causal {
        // Forward sweep: d_qh_i needs the key/value prefix state.
        let mut kv = vec![T::ZERO; d * d];
        for i in 0..n {
            fold_outer(&mut kv, d, kh.row(i), v.row(i));
            let do_row = d_out.row(i);
            let dq_row = d_qh.row_mut(i);
            for (di, g) in dq_row.iter_mut().enumerate() {
                *g = half * dot(&kv[di * d..(di + 1) * d], do_row);
            }
        }
        // Reverse sweep: d_v_n and d_kh_n need the query suffix state.
        let mut m_acc = vec![T::ZERO; d * d]; // sum of q_i (outer) d_out_i over the suffix
        let mut g_acc = vec![T::ZERO; d]; // sum of d_out_i
        for i in (0..n).rev() {
            fold_outer(&mut m_acc, d, qh.row(i), d_out.row(i));
            fold_row(&mut g_acc, d_out.row(i));
            let k_row = kh.row(i);
            let dv_row = d_v.row_mut(i);
            dv_row.copy_from_slice(&g_acc);
            for (di, &kval) in k_row.iter().enumerate() {
                let m_row = &m_acc[di * d..(di + 1) * d];
                for (o, &m) in dv_row.iter_mut().zip(m_row) {
                    *o += kval * m;
                }
            }
            for o in dv_row.iter_mut() {
                *o *= half;
            }
            let v_row = v.row(i);
            let dk_row = d_kh.row_mut(i);
            for (di, g) in dk_row.iter_mut().enumerate() {
                *g = half * dot(&m_acc[di * d..(di + 1) * d], v_row);
            }
        }
    } else {
        let kv = outer_product_sum(kh, v)?;
        let m_acc = outer_product_sum(qh, d_out)?;
        let g_acc = d_out.column_sums();
        for i in 0..n {
            let do_row = d_out.row(i);
            for (di, g) in d_qh.row_mut(i).iter_mut().enumerate() {
                *g = half * dot(kv.row(di), do_row);
            }
            let k_row = kh.row(i);
            let dv_row = d_v.row_mut(i);
            dv_row.copy_from_slice(&g_acc);
            for (di, &kval) in k_row.iter().enumerate() {
                for (o, &m) in dv_row.iter_mut().zip(m_acc.row(di)) {
                    *o += kval * m;
                }
            }
            for o in dv_row.iter_mut() {
                *o *= half;
            }
            let v_row = v.row(i);
            for (di, g) in d_kh.row_mut(i).iter_mut().enumerate() {
                *g = half * dot(m_acc.row(di), v_row);
            }
        }
    }
    Ok((d_qh, d_kh, d_v))
}

fn backward_normalized<T: Real>(
    qh: &Matrix<T>,
    kh: &Matrix<T>,
    v: &Matrix<T>,
    causal: bool,
    d_out: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let (n, d) = qh.shape();
    let mut d_qh = Matrix::zeros(n, d)?;
    let mut d_kh = Matrix::zeros(n, d)?;
    let mut d_v = Matrix::zeros(n, d)?;

    // Row i of the output is u_i / c_i with u_i the score-weighted value
    // sum and c_i the score sum. Per row:
    //   d_u_i   = d_out_i / c_i
    //   beta_i  = (d_out_i . u_i) / c_i^2       (from d/dc of u/c)
    //   d_qh_i  = (KV_i d_out_i) / c_i - beta_i z_i
    //   d_v_n  += d_out_i / c_i + (q_i.k_n) d_out_i / c_i   over i >= n
    //   d_kh_n  = M_n v_n - B_n
    // where KV/z are prefix sums over keys/values, M_n is the suffix sum
    // of (q_i / c_i) (outer) d_out_i, and B_n the suffix sum of beta_i q_i.
    //
    // The first visible row is the degenerate single-key case: its value
    // weight is exactly one and it touches neither scores nor denominator,
    // matching the forward special case.

    if causal {
        let mut kv = vec![T::ZERO; d * d];
        let mut z = vec![T::ZERO; d];
        let mut vs = vec![T::ZERO; d];
        let mut inv_c = vec![T::ZERO; n];
        let mut betas = vec![T::ZERO; n];
        let mut u = vec![T::ZERO; d];
        for i in 0..n {
            fold_outer(&mut kv, d, kh.row(i), v.row(i));
            fold_row(&mut z, kh.row(i));
            fold_row(&mut vs, v.row(i));
            if i == 0 {
                continue; // d_qh_0 = 0, no denominator in play
            }
            let q_row = qh.row(i);
            let den = T::from_f64((i + 1) as f64) + dot(q_row, &z);
            if den.to_f64().abs() < DENOM_GUARD {
                return Err(Error::DegenerateDenominator {
                    row: i,
                    value: den.to_f64(),
                });
            }
            let ic = T::ONE / den;
            inv_c[i] = ic;
            combine_row(&mut u, &vs, q_row, &kv, d);
            let do_row = d_out.row(i);
            let beta = dot(do_row, &u) * ic * ic;
            betas[i] = beta;
            for (di, g) in d_qh.row_mut(i).iter_mut().enumerate() {
                *g = ic * dot(&kv[di * d..(di + 1) * d], do_row) - beta * z[di];
            }
        }
        let mut m_acc = vec![T::ZERO; d * d];
        let mut g_acc = vec![T::ZERO; d];
        let mut b_acc = vec![T::ZERO; d];
        let mut scaled = vec![T::ZERO; d];
        for i in (0..n).rev() {
            let do_row = d_out.row(i);
            if i == 0 {
                // weight of the single visible value row is exactly one
                fold_row(&mut g_acc, do_row);
            } else {
                let ic = inv_c[i];
                for (s, &g) in scaled.iter_mut().zip(do_row) {
                    *s = g * ic;
                }
                fold_outer(&mut m_acc, d, qh.row(i), &scaled);
                fold_row(&mut g_acc, &scaled);
                let beta = betas[i];
                for (b, &qv) in b_acc.iter_mut().zip(qh.row(i)) {
                    *b += beta * qv;
                }
            }
            let k_row = kh.row(i);
            let dv_row = d_v.row_mut(i);
            dv_row.copy_from_slice(&g_acc);
            for (di, &kval) in k_row.iter().enumerate() {
                let m_row = &m_acc[di * d..(di + 1) * d];
                for (o, &m) in dv_row.iter_mut().zip(m_row) {
                    *o += kval * m;
                }
            }
            let v_row = v.row(i);
            for (di, g) in d_kh.row_mut(i).iter_mut().enumerate() {
                *g = dot(&m_acc[di * d..(di + 1) * d], v_row) - b_acc[di];
            }
        }
    } else {
        if n == 1 {
            // forward copies the value row through exactly
            let mut dv = Matrix::zeros(1, d)?;
            dv.row_mut(0).copy_from_slice(d_out.row(0));
            return Ok((d_qh, d_kh, dv));
        }
        let kv = outer_product_sum(kh, v)?;
        let z = kh.column_sums();
        let vs = v.column_sums();
        let count = T::from_f64(n as f64);
        let mut u = vec![T::ZERO; d];
        let mut scaled = Matrix::zeros(n, d)?;
        let mut betas = vec![T::ZERO; n];
        for i in 0..n {
            let q_row = qh.row(i);
            let den = count + dot(q_row, &z);
            if den.to_f64().abs() < DENOM_GUARD {
                return Err(Error::DegenerateDenominator {
                    row: i,
                    value: den.to_f64(),
                });
            }
            let ic = T::ONE / den;
            combine_row(&mut u, &vs, q_row, kv.data(), d);
            let do_row = d_out.row(i);
            let beta = dot(do_row, &u) * ic * ic;
            betas[i] = beta;
            for (di, g) in d_qh.row_mut(i).iter_mut().enumerate() {
                *g = ic * dot(kv.row(di), do_row) - beta * z[di];
            }
            for (s, &g) in scaled.row_mut(i).iter_mut().zip(do_row) {
                *s = g * ic;
            }
        }
        let m_acc = outer_product_sum(qh, &scaled)?;
        let g_acc = scaled.column_sums();
        let mut b_acc = vec![T::ZERO; d];
        for i in 0..n {
            let beta = betas[i];
            for (b, &qv) in b_acc.iter_mut().zip(qh.row(i)) {
                *b += beta * qv;
            }
        }
        for i in 0..n {
            let k_row = kh.row(i);
            let dv_row = d_v.row_mut(i);
            dv_row.copy_from_slice(&g_acc);
            for (di, &kval) in k_row.iter().enumerate() {
                for (o, &m) in dv_row.iter_mut().zip(m_acc.row(di)) {
                    *o += kval * m;
                }
            }
            let v_row = v.row(i);
            for (di, g) in d_kh.row_mut(i).iter_mut().enumerate() {
                *g = dot(m_acc.row(di), v_row) - b_acc[di];
            }
        }
    }
    Ok((d_qh, d_kh, d_v))
}

/// Gradient of row-wise `x / max(||x||, eps)`.
fn normalize_rows_backward<T: Real>(x: &Matrix<T>, d_xh: &Matrix<T>) -> Matrix<T> {
    let (n, d) = x.shape();
    let eps = T::from_f64(NORM_EPS);
    let mut d_x = Matrix::zeros(n, d).expect("gradient shape");
    for i in 0..n {
        let x_row = x.row(i);
        let g_row = d_xh.row(i);
        let out = d_x.row_mut(i);
        let norm = l2_norm(x_row);
        if norm >= eps {
            let mut g_dot_xh = T::ZERO;
            for (&g, &xv) in g_row.iter().zip(x_row) {
                g_dot_xh += g * (xv / norm);
            }
            for ((o, &g), &xv) in out.iter_mut().zip(g_row).zip(x_row) {
                *o = (g - g_dot_xh * (xv / norm)) / norm;
            }
        } else {
            // below the floor the map is x / eps, a constant scaling
            for (o, &g) in out.iter_mut().zip(g_row) {
                *o = g / eps;
            }
        }
    }
    d_x
}

/// out = vs + q_row * acc, with `acc` a d x d row-major block.
#[inline]
fn combine_row<T: Real>(out: &mut [T], vs: &[T], q_row: &[T], acc: &[T], d: usize) {
    out.copy_from_slice(vs);
    for (di, &qv) in q_row.iter().enumerate() {
        let acc_row = &acc[di * d..(di + 1) * d];
        for (o, &a) in out.iter_mut().zip(acc_row) {
            *o += qv * a;
        }
    }
}

#[inline]
fn fold_outer<T: Real>(acc: &mut [T], width: usize, a_row: &[T], b_row: &[T]) {
    for (di, &a) in a_row.iter().enumerate() {
        let acc_row = &mut acc[di * width..(di + 1) * width];
        for (o, &b) in acc_row.iter_mut().zip(b_row) {
            *o += a * b;
        }
    }
}

#[inline]
fn fold_row<T: Real>(acc: &mut [T], row: &[T]) {
    for (o, &v) in acc.iter_mut().zip(row) {
        *o += v;
    }
}

/// Sum over rows of `a_m (outer) b_m`, folded in ascending row order;
/// equals `a^T b` with the same floating-point operation sequence as the
/// causal prefix accumulators.
fn outer_product_sum<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::ShapeMismatch {
            op: "outer_product_sum",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.cols(), b.cols())?;
    let width = b.cols();
    for m in 0..a.rows() {
        fold_outer(out.data_mut(), width, a.row(m), b.row(m));
    }
    Ok(out)
}
