//! Dense vectors and matrices with tier-parameterized arithmetic.
//!
//! Everything here is generic over [`Real`], so the same kernel runs at P32,
//! P64, or the extended tier with per-operation rounding at that tier.
//! Accumulations are sequential left to right; summation order is part of
//! the rounding model, not an implementation detail.
//!
//! Sizes are desk scale (at most a couple thousand rows), so the
//! factorizations are unblocked and dense on purpose.

mod factor;
mod spectral;
mod tiered;

pub use factor::{lu_factor, lu_solve, qr_orthonormal, LuFactors};
pub use spectral::{cond_2, eig_sym, eig_sym_min, spectral_norm, svd, SvdResult};
pub use tiered::{DMat, DVec};

use crate::precision::Real;

/// Row-major dense matrix over one scalar tier.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix dimensions must be at least 1x1");
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Lift an f64 row-of-rows literal. Entries are converted exactly when
    /// the tier can hold them, otherwise rounded by the conversion.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty() && !rows[0].is_empty(), "matrix literal must be non-empty");
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix literal");
        Mat::from_fn(rows.len(), cols, |i, j| T::from_f64(rows[i][j]))
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len(), entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = T::from_f64(v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Mat<T> {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn to_f64_mat(&self) -> Mat<f64> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v.to_f64()).collect() }
    }

    pub fn cast<U: Real>(&self) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect() }
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// A + B, elementwise at the tier.
    pub fn add(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].add(other[(i, j)]))
    }

    /// A - B, elementwise at the tier.
    pub fn sub(&self, other: &Mat<T>) -> Mat<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].sub(other[(i, j)]))
    }

    /// c * A, elementwise at the tier.
    pub fn scale(&self, c: T) -> Mat<T> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)].mul(c))
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Sequential dot product, accumulated left to right.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for i in 0..a.len() {
        acc = acc.add(a[i].mul(b[i]));
    }
    acc
}

/// Euclidean norm via the sequential dot product.
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// y = A x.
pub fn matvec<T: Real>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    assert_eq!(a.cols(), x.len());
    (0..a.rows()).map(|i| dot(a.row(i), x)).collect()
}

/// y = A^T x, accumulated over rows in index order.
pub fn matvec_t<T: Real>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    assert_eq!(a.rows(), x.len());
    let mut y = vec![T::zero(); a.cols()];
    for i in 0..a.rows() {
        let r = a.row(i);
        for j in 0..a.cols() {
            y[j] = y[j].add(r[j].mul(x[i]));
        }
    }
    y
}

/// C = A B with the inner accumulation left to right.
pub fn matmul<T: Real>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    assert_eq!(a.cols(), b.rows());
    let mut c = Mat::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = T::zero();
            for k in 0..a.cols() {
                acc = acc.add(a[(i, k)].mul(b[(k, j)]));
            }
            c[(i, j)] = acc;
        }
    }
    c
}

/// Frobenius norm, sequential accumulation.
pub fn fro_norm<T: Real>(a: &Mat<T>) -> T {
    let mut acc = T::zero();
    for v in a.entries() {
        acc = acc.add(v.mul(*v));
    }
    acc.sqrt()
}

/// x + alpha d, elementwise.
pub fn add_scaled<T: Real>(x: &[T], alpha: T, d: &[T]) -> Vec<T> {
    assert_eq!(x.len(), d.len());
    (0..x.len()).map(|i| x[i].add(alpha.mul(d[i]))).collect()
}

/// x - y, elementwise.
pub fn vec_sub<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    assert_eq!(x.len(), y.len());
    (0..x.len()).map(|i| x[i].sub(y[i])).collect()
}
