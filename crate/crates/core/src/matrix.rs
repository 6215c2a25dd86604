//! Dense row-major matrix substrate.
//!
//! Everything downstream (attention kernels, oracles, the toy trainer)
//! builds on this module. All operations are pure: inputs are never
//! mutated, and the summation order inside [`Matrix::matmul`] is fixed
//! (row-major accumulation, ascending inner index) so results are
//! reproducible run to run.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{Dist, RngState};

/// Divisor floor used when normalizing rows; rows with a smaller L2 norm
/// are divided by this constant instead, which leaves all-zero rows zero.
pub const NORM_EPS: f64 = 1e-12;

/// Dense row-major 2-D array over `f32` or `f64` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T: Real = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    /// Builds a matrix from row-major data. Both dimensions must be at
    /// least one and `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        let expected = rows * cols;
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// All-zeros matrix. Reports an allocation error instead of aborting
    /// when the backing store cannot be reserved (large quadratic buffers).
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        let len = rows
            .checked_mul(cols)
            .ok_or(Error::Allocation { rows, cols })?;
        let mut data = Vec::new();
        data.try_reserve_exact(len)
            .map_err(|_| Error::Allocation { rows, cols })?;
        data.resize(len, T::ZERO);
        Ok(Self { rows, cols, data })
    }

    /// Matrix filled by `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut m = Self::zeros(rows, cols)?;
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        Ok(m)
    }

    /// Seeded random matrix with entries drawn from `dist`.
    /// Deterministic for a fixed seed; advances `rng`.
    pub fn random(rows: usize, cols: usize, rng: &mut RngState, dist: Dist) -> Result<Self> {
        let mut m = Self::zeros(rows, cols)?;
        for v in m.data.iter_mut() {
            *v = T::from_f64(rng.sample(dist));
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Result<Self> {
        let mut out = Self::zeros(self.cols, self.rows)?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Ok(out)
    }

    /// Standard matrix product with a fixed loop order (`i`, `k`, `j`):
    /// each output entry accumulates over `k` in ascending order, so the
    /// result is bit-stable across runs.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols)?;
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let mut out = self.clone();
        out.softmax_rows_in_place();
        out
    }

    pub(crate) fn softmax_rows_in_place(&mut self) {
        for r in 0..self.rows {
            softmax_in_place(self.row_mut(r));
        }
    }

    /// Rescales each row to unit L2 norm, dividing by `max(norm, eps)`.
    /// Rows whose norm falls below `eps` are effectively left untouched
    /// (all-zero rows stay zero).
    pub fn l2_normalize_rows(&self, eps: T) -> Self {
        let mut out = self.clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let norm = l2_norm(row);
            let div = norm.maximum(eps);
            for v in row.iter_mut() {
                *v /= div;
            }
        }
        out
    }

    /// Element-wise map.
    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o = f(*o, b);
        }
        Ok(out)
    }

    /// Column sums, accumulated over rows in ascending order.
    pub fn column_sums(&self) -> Vec<T> {
        let mut sums = alloc::vec![T::ZERO; self.cols];
        for r in 0..self.rows {
            for (s, &v) in sums.iter_mut().zip(self.row(r)) {
                *s += v;
            }
        }
        sums
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.data.iter().copied()
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimensions { rows, cols });
    }
    Ok(())
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        max = max.maximum(v);
    }
    let mut sum = T::ZERO;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn l2_norm<T: Real>(row: &[T]) -> T {
    let mut sq = T::ZERO;
    for &v in row {
        sq += v * v;
    }
    sq.sqrt()
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
