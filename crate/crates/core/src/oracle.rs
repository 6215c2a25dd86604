//! Brute-force reference computations and finite-difference gradients.
//!
//! Everything here is an independent transcription of the scalar
//! attention definitions: plain loops, no reordering, no accumulators,
//! and no code shared with the fast paths it exists to check. Used only
//! by tests and the `verify` command; performance is a non-goal.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Denominator floor for the relative-error metric, so comparisons of
/// near-zero gradient entries do not blow up.
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// The three pairwise score functions in scope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// exp(q.k / sqrt(D)) with a row-normalizing denominator.
    Exponential,
    /// 1 + q.k on L2-normalized rows, row-normalized denominator.
    AffineNormalized,
    /// 1 + q.k on L2-normalized rows, divided by the constant 2.
    AffineDenomFree,
}

/// Scalar-form attention computed exactly as written: for each output
/// entry, sum kernel-weighted value entries over the visible positions
/// and divide. O(N^2 D) time. Double precision only.
pub fn kernel_view_reference(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    kernel: KernelKind,
    causal: bool,
) -> Result<Matrix> {
    if q.shape() != k.shape() || k.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "kernel_view_reference",
            left: q.shape(),
            right: v.shape(),
        });
    }
    let (n, d) = q.shape();
    let (qn, kn) = match kernel {
        KernelKind::Exponential => (q.clone(), k.clone()),
        _ => (unit_rows(q), unit_rows(k)),
    };
    let inv_sqrt_d = 1.0 / libm::sqrt(d as f64);

    let mut out = Matrix::zeros(n, d)?;
    let mut weights = vec![0.0f64; n];
    for i in 0..n {
        let hi = if causal { i } else { n - 1 };
        for nn in 0..=hi {
            let mut s = 0.0;
            for di in 0..d {
                s += qn.get(i, di) * kn.get(nn, di);
            }
            weights[nn] = match kernel {
                KernelKind::Exponential => libm::exp(s * inv_sqrt_d),
                _ => 1.0 + s,
            };
        }
        for j in 0..d {
            let mut num = 0.0;
            let mut den = 0.0;
            for nn in 0..=hi {
                num += weights[nn] * v.get(nn, j);
                den += weights[nn];
            }
            let value = match kernel {
                KernelKind::AffineDenomFree => num / 2.0,
                _ => num / den,
            };
            out.set(i, j, value);
        }
    }
    Ok(out)
}

fn unit_rows(m: &Matrix) -> Matrix {
    let (n, d) = m.shape();
    let mut out = m.clone();
    for i in 0..n {
        let mut sq = 0.0;
        for j in 0..d {
            sq += m.get(i, j) * m.get(i, j);
        }
        let norm = libm::sqrt(sq);
        let div = if norm > 1e-12 { norm } else { 1e-12 };
        for j in 0..d {
            out.set(i, j, m.get(i, j) / div);
        }
    }
    out
}

/// Central-difference gradient of a scalar function of a matrix:
/// (f(x + h e_ij) - f(x - h e_ij)) / 2h per entry. Double precision.
pub fn finite_difference_grads(f: impl Fn(&Matrix) -> f64, at: &Matrix, h: f64) -> Matrix {
    let (rows, cols) = at.shape();
    let mut grad = Matrix::zeros(rows, cols).expect("gradient shape");
    for r in 0..rows {
        for c in 0..cols {
            let base = at.get(r, c);
            let mut probe = at.clone();
            probe.set(r, c, base + h);
            let f_plus = f(&probe);
            probe.set(r, c, base - h);
            let f_minus = f(&probe);
            grad.set(r, c, (f_plus - f_minus) / (2.0 * h));
        }
    }
    grad
}

/// Largest absolute entry-wise difference.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "max_abs_diff",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = libm::fabs(x - y);
        if diff > worst {
            worst = diff;
        }
    }
    Ok(worst)
}

/// Largest entry-wise |a - b| / max(|a|, |b|, floor).
pub fn max_relative_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "max_relative_error",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b.iter()) {
        let denom = libm::fmax(libm::fmax(libm::fabs(x), libm::fabs(y)), REL_ERR_FLOOR);
        let err = libm::fabs(x - y) / denom;
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

/// Collects matrices row by row into one column-stacked vector view used
/// by gradient checks that treat several inputs as one flat parameter.
pub fn flatten(ms: &[&Matrix]) -> Vec<f64> {
    let mut out = Vec::new();
    for m in ms {
        out.extend(m.iter());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Dist, RngState};

    #[test]
    fn fd_of_entry_sum_is_all_ones() {
        let mut rng = RngState::new(1);
        let at: Matrix = Matrix::random(3, 4, &mut rng, Dist::StandardNormal).unwrap();
        let grad = finite_difference_grads(|m| m.iter().sum(), &at, 1e-5);
        for v in grad.iter() {
            assert!((v - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn fd_of_half_squared_norm_is_identity() {
        let mut rng = RngState::new(2);
        let at: Matrix = Matrix::random(3, 3, &mut rng, Dist::StandardNormal).unwrap();
        let grad = finite_difference_grads(|m| 0.5 * m.iter().map(|v| v * v).sum::<f64>(), &at, 1e-5);
        for (g, x) in grad.iter().zip(at.iter()) {
            assert!((g - x).abs() <= 1e-8);
        }
    }

    #[test]
    fn exponential_single_position_is_value_row() {
        let mut rng = RngState::new(3);
        let q: Matrix = Matrix::random(1, 5, &mut rng, Dist::StandardNormal).unwrap();
        let k: Matrix = Matrix::random(1, 5, &mut rng, Dist::StandardNormal).unwrap();
        let v: Matrix = Matrix::random(1, 5, &mut rng, Dist::StandardNormal).unwrap();
        let out = kernel_view_reference(&q, &k, &v, KernelKind::Exponential, false).unwrap();
        assert!(max_abs_diff(&out, &v).unwrap() <= 1e-15);
    }

    #[test]
    fn denomfree_repeated_unit_rows_sum_prefix() {
        // q = k, all rows the same unit vector: every visible weight is
        // exactly (1+1)/2 = 1, so causal row i is the prefix sum of v
        let n = 6;
        let q = Matrix::from_fn(n, 2, |_, c| if c == 0 { 0.6 } else { 0.8 }).unwrap();
        let mut rng = RngState::new(4);
        let v: Matrix = Matrix::random(n, 2, &mut rng, Dist::StandardNormal).unwrap();
        let out = kernel_view_reference(&q, &q, &v, KernelKind::AffineDenomFree, true).unwrap();
        for i in 0..n {
            for j in 0..2 {
                let mut prefix = 0.0;
                for nn in 0..=i {
                    prefix += v.get(nn, j);
                }
                assert!((out.get(i, j) - prefix).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_error_floor_protects_near_zero() {
        let a = Matrix::from_vec(1, 2, alloc::vec![0.0, 1.0]).unwrap();
        let b = Matrix::from_vec(1, 2, alloc::vec![1e-15, 1.0]).unwrap();
        let err = max_relative_error(&a, &b).unwrap();
        assert!(err <= 2e-7, "floored error should be tiny, got {err}");
    }
}
