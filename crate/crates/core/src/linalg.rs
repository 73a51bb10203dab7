//! Small dense complex matrices.
//!
//! Dimensions in this crate are the antenna and user counts of a broadcast
//! channel, so everything here is a straightforward O(n^3) kernel over a
//! row-major buffer. The Cholesky factor and triangular solves are the only
//! routes to an inverse: nothing multiplies by an explicitly formed inverse
//! of a general matrix.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::{Scalar, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular to working precision (condition estimate {0:.3e})")]
    Singular(f64),
    #[error("non-finite entry in input")]
    NonFinite,
}

/// Row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<C<T>>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[T]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C::new(v, T::zero());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[C<T>]) -> Result<Vec<C<T>>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::Dimension(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(C::zero(), |acc, (a, b)| acc + a * b)
            })
            .collect())
    }

    /// `self * self^H`.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .fold(C::zero(), |acc, (a, b)| acc + a * b.conj());
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
            out[(i, i)].im = T::zero();
        }
        out
    }

    /// `self + alpha * I` for a square matrix.
    pub fn add_scaled_identity(&self, alpha: T) -> Self {
        debug_assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)].re += alpha;
        }
        out
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(LinalgError::Dimension(format!(
                "{}x{} minus {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| ((i + 1)..self.cols).all(|j| self[(i, j)].is_zero()))
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.rows).all(|i| (0..i.min(self.cols)).all(|j| self[(i, j)].is_zero()))
    }

    /// Cholesky factor `C` (lower triangular, positive real diagonal) with
    /// `A = C C^H`. Only the lower triangle of `A` is read.
    pub fn cholesky_lower(&self) -> Result<Self, LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::Dimension(format!(
                "cholesky of {}x{}",
                self.rows, self.cols
            )));
        }
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = self.rows;
        let mut c = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)].re;
            for k in 0..j {
                d -= c[(j, k)].norm_sqr();
            }
            if !(d > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite {
                    pivot: j,
                    value: d.as_f64(),
                });
            }
            let djj = d.sqrt();
            c[(j, j)] = C::new(djj, T::zero());
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= c[(i, k)] * c[(j, k)].conj();
                }
                c[(i, j)] = s / djj;
            }
        }
        Ok(c)
    }

    /// Solves `self * X = B` for lower-triangular `self` by forward substitution.
    pub fn solve_lower(&self, b: &Self) -> Result<Self, LinalgError> {
        self.check_triangular_solve(b)?;
        let n = self.rows;
        let mut x = b.clone();
        for col in 0..b.cols {
            for i in 0..n {
                let mut s = x[(i, col)];
                for k in 0..i {
                    s -= self[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self[(i, i)];
            }
        }
        Ok(x)
    }

    /// Solves `self * X = B` for upper-triangular `self` by back substitution.
    pub fn solve_upper(&self, b: &Self) -> Result<Self, LinalgError> {
        self.check_triangular_solve(b)?;
        let n = self.rows;
        let mut x = b.clone();
        for col in 0..b.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, col)];
                for k in (i + 1)..n {
                    s -= self[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = s / self[(i, i)];
            }
        }
        Ok(x)
    }

    fn check_triangular_solve(&self, b: &Self) -> Result<(), LinalgError> {
        if !self.is_square() || self.rows != b.rows {
            return Err(LinalgError::Dimension(format!(
                "triangular solve {}x{} with rhs {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        if (0..self.rows).any(|i| self[(i, i)].is_zero()) {
            return Err(LinalgError::Singular(f64::INFINITY));
        }
        Ok(())
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix, kept
/// around to solve against it repeatedly.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    lower: CMatrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self, LinalgError> {
        Ok(Self {
            lower: a.cholesky_lower()?,
        })
    }

    /// The factor `C` with `A = C C^H`.
    pub fn lower(&self) -> &CMatrix<T> {
        &self.lower
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &CMatrix<T>) -> Result<CMatrix<T>, LinalgError> {
        let y = self.lower.solve_lower(b)?;
        self.lower.adjoint().solve_upper(&y)
    }

    /// `C^{-1}`, lower triangular with positive real diagonal, so that
    /// `C^{-H} C^{-1} = A^{-1}`.
    pub fn inverse_factor(&self) -> Result<CMatrix<T>, LinalgError> {
        let n = self.lower.rows();
        let mut inv = self.lower.solve_lower(&CMatrix::identity(n))?;
        // forward substitution leaves round-off above the diagonal at exactly zero,
        // but the diagonal's imaginary part can pick up -0.0 noise; pin it
        for i in 0..n {
            inv[(i, i)].im = T::zero();
        }
        Ok(inv)
    }

    /// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self, a: &CMatrix<T>) -> Result<T, LinalgError> {
        let inv = self.solve(&CMatrix::identity(a.rows()))?;
        Ok(a.norm_one() * inv.norm_one())
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;

    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for CMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in &self.data[i * self.cols..(i + 1) * self.cols] {
                write!(f, "({:?}, {:?}) ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr<T: Scalar>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}
