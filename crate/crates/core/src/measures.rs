//! Equal-weight empirical measures on the real line.
//!
//! An [`EmpiricalMeasure`] stores its atoms sorted, so the quadratic
//! Wasserstein distance between two measures of the same size reduces to the
//! root-mean-square gap between order statistics (the monotone coupling is
//! optimal in one dimension). Mean and variance are cached at construction
//! and computed from the sorted atoms, which makes every functional a
//! deterministic function of the sorted sample regardless of input order.

use rayon::slice::ParallelSliceMut;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Above this many atoms the construction sort runs on the rayon pool.
const PAR_SORT_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure<T: Scalar = f64> {
    samples: Vec<T>,
    mean: T,
    variance: T,
}

impl<T: Scalar> EmpiricalMeasure<T> {
    /// Builds a measure from a copy of `values`.
    pub fn from_samples(values: &[T]) -> Result<Self> {
        Self::from_vec(values.to_vec())
    }

    /// Builds a measure taking ownership of `values` (sorted in place).
    pub fn from_vec(mut values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        for (index, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput { index });
            }
            // -0.0 + 0.0 == +0.0: gives every zero the same bit pattern so
            // the sorted vector is unique.
            *v = *v + T::zero();
        }
        let cmp = |a: &T, b: &T| a.partial_cmp(b).expect("finite values are ordered");
        if values.len() >= PAR_SORT_THRESHOLD {
            values.par_sort_unstable_by(cmp);
        } else {
            values.sort_unstable_by(cmp);
        }
        let n = T::from_count(values.len());
        let mean = values.iter().copied().sum::<T>() / n;
        let variance = values
            .iter()
            .map(|&x| (x - mean) * (x - mean))
            .sum::<T>()
            / n;
        Ok(Self {
            samples: values,
            mean,
            variance,
        })
    }

    /// Point mass at `x`.
    pub fn dirac(x: T) -> Result<Self> {
        Self::from_vec(vec![x])
    }

    /// Atoms in nondecreasing order.
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn size(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    /// Population variance (divisor N).
    pub fn variance(&self) -> T {
        self.variance
    }

    /// `(1/N) Σ |x_i|^p`.
    pub fn moment(&self, p: u32) -> T {
        let n = T::from_count(self.size());
        self.samples
            .iter()
            .map(|&x| x.abs().powi(p as i32))
            .sum::<T>()
            / n
    }

    /// The measure translated by `c`.
    pub fn shifted(&self, c: T) -> Result<Self> {
        Self::from_vec(self.samples.iter().map(|&x| x + c).collect())
    }

    /// Quadratic Wasserstein distance to a measure of the same size.
    pub fn wasserstein2(&self, other: &Self) -> Result<T> {
        if self.size() != other.size() {
            return Err(Error::SizeMismatch {
                left: self.size(),
                right: other.size(),
            });
        }
        let n = T::from_count(self.size());
        let ss = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>();
        Ok((ss / n).sqrt())
    }
}

/// Free-function form of [`EmpiricalMeasure::wasserstein2`].
pub fn wasserstein2<T: Scalar>(mu: &EmpiricalMeasure<T>, nu: &EmpiricalMeasure<T>) -> Result<T> {
    mu.wasserstein2(nu)
}

/// Free-function form of [`EmpiricalMeasure::moment`].
pub fn moment<T: Scalar>(mu: &EmpiricalMeasure<T>, p: u32) -> T {
    mu.moment(p)
}
