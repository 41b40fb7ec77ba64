//! Small dense matrices and a Cholesky solver.
//!
//! The systems solved here are `d × d` with `d` the basis size (a handful),
//! so a plain row-major buffer is all that is needed.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::SizeMismatch {
                left: rows * cols,
                right: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::SizeMismatch {
                    left: cols,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Column-major vectorization `vec(M)`: entry `(k, l)` lands at `k + l·rows`.
    pub fn vec_col_major(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for l in 0..self.cols {
            for k in 0..self.rows {
                out.push(self[(k, l)]);
            }
        }
        out
    }

    /// Largest absolute column sum.
    pub fn norm1(&self) -> T {
        (0..self.cols)
            .map(|l| (0..self.rows).map(|k| self[(k, l)].abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quadratic_form(&self, v: &[T]) -> T {
        v.iter().zip(self.mul_vec(v)).map(|(&a, b)| a * b).sum()
    }

    /// Largest `|M_kl − M_lk|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for k in 0..self.rows {
            for l in 0..k {
                worst = worst.max((self[(k, l)] - self[(l, k)]).abs());
            }
        }
        worst
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    lower: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `a` (only the lower triangle is read). `None` if `a` is not
    /// numerically positive definite.
    pub fn new(a: &Matrix<T>) -> Option<Self> {
        if !a.is_square() {
            return None;
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return None;
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Some(Self { lower: l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lower.rows();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        y
    }

    /// Reciprocal 1-norm condition number of the factored matrix. Only used
    /// as a diagnostic, so the inverse columns are formed explicitly (`d` is
    /// small).
    pub fn rcond(&self, a: &Matrix<T>) -> T {
        let n = a.rows();
        let mut inv_norm = T::zero();
        let mut e = vec![T::zero(); n];
        for l in 0..n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[l] = T::one();
            let col = self.solve(&e);
            inv_norm = inv_norm.max(col.iter().map(|x| x.abs()).sum());
        }
        let denom = a.norm1() * inv_norm;
        if denom > T::zero() && denom.is_finite() {
            T::one() / denom
        } else {
            T::zero()
        }
    }
}

/// Threshold below which a Gram matrix is treated as singular.
pub const RCOND_MIN: f64 = 1e-10;

/// Factors `a` and checks its conditioning; returns the factor and rcond.
pub fn factor_spd<T: Scalar>(a: &Matrix<T>) -> Result<(Cholesky<T>, T)> {
    let chol = Cholesky::new(a).ok_or(Error::SingularLambda { rcond: 0.0 })?;
    let rcond = chol.rcond(a);
    if rcond < T::lit(RCOND_MIN) {
        return Err(Error::SingularLambda {
            rcond: rcond.widen(),
        });
    }
    Ok((chol, rcond))
}
