//! Goodness-of-fit test for the squared volatility.
//!
//! Given increments `D^i_j = X^i_{j+1} − X^i_j` (`j = 0..n`, left-endpoint
//! coefficient evaluation) and the column measures `μ^N_j`:
//!
//! ```text
//! B̂     = 1/(3NΔ) Σ_{i,j} (D^i_j)⁴
//! Γ̂_k   = 1/N     Σ_{i,j} a_k²(X^i_j, μ^N_j) (D^i_j)²
//! Λ̂_kl  = Δ/N     Σ_{i,j} a_k²(X^i_j, μ^N_j) a_l²(X^i_j, μ^N_j)
//! Ŝ     = g(Γ̂, B̂, Λ̂) = B̂ − Γ̂ᵀ Λ̂⁻¹ Γ̂,     Ĝ = Ŝ / B̂
//! ```
//!
//! Each estimator is the particle average of a per-particle vector
//! `V̂^i = (Ẑ^i_1..Ẑ^i_d, Ẑ^i_B, vec Ẑ^i_Λ)`; the empirical covariance of
//! those rows, pushed through `∇g`, estimates the asymptotic variance
//! `τ²` of `√N (Ŝ − L)`. The null `L = 0` is rejected when
//! `√N Ŝ / τ̂ > z_{1−α}`.
//!
//! Conventions: `vec(·)` is column-major everywhere (entry `(k, l)` at
//! `k + l·d`), and per-particle sums run over `j` ascending before particles
//! are combined in index order, so results are independent of thread count.

use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{num17, opt_num17};
use crate::linalg::{factor_spd, Matrix};
use crate::measures::EmpiricalMeasure;
use crate::models::BasisFamily;
use crate::normal::{normal_quantile, normal_sf};
use crate::scalar::Scalar;
use crate::simulate::ObservationGrid;

/// Quadratic forms in `[−1e-12, 0)` are rounding noise and clamp to zero.
const NEGATIVE_ROUNDING_SLACK: f64 = 1e-12;

/// Estimators and per-particle influence rows for one grid and basis.
#[derive(Debug, Clone)]
pub struct GofSummary<T: Scalar = f64> {
    pub b_hat: T,
    pub gamma_hat: Vec<T>,
    pub lambda_hat: Matrix<T>,
    pub s_hat: T,
    pub g_hat: T,
    /// `N × (d² + d + 1)`; row `i` is `V̂^i`.
    pub v: Matrix<T>,
    pub d: usize,
    pub particles: usize,
    pub steps: usize,
    pub delta: T,
    pub lambda_rcond: T,
}

/// Width of a `V̂` row for a basis of size `d`.
pub fn influence_width(d: usize) -> usize {
    d * d + d + 1
}

/// Computes `B̂, Γ̂, Λ̂, Ŝ, Ĝ` and the influence rows.
pub fn compute_summary<T: Scalar>(
    grid: &ObservationGrid<T>,
    basis: &BasisFamily<T>,
) -> Result<GofSummary<T>> {
    let particles = grid.particles();
    if particles < 2 {
        return Err(Error::InsufficientParticles(particles));
    }
    let steps = grid.steps();
    let d = basis.d();
    let width = influence_width(d);
    let delta = grid.delta();
    let three_delta = T::lit(3.0) * delta;

    let measures: Vec<EmpiricalMeasure<T>> = (0..steps)
        .into_par_iter()
        .map(|j| grid.measure(j))
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<T>> = (0..particles)
        .into_par_iter()
        .map(|i| {
            let mut atoms = vec![T::zero(); d];
            let mut z = vec![T::zero(); d];
            let mut quartic = T::zero();
            let mut gram = vec![T::zero(); d * d];
            for (j, mu) in measures.iter().enumerate() {
                let x = grid.value(i, j);
                let inc = grid.value(i, j + 1) - x;
                let inc2 = inc * inc;
                basis.eval_into(x, mu, &mut atoms);
                for (zk, &ak) in z.iter_mut().zip(&atoms) {
                    *zk = *zk + ak * inc2;
                }
                quartic = quartic + inc2 * inc2;
                for l in 0..d {
                    for k in 0..=l {
                        gram[k + l * d] = gram[k + l * d] + atoms[k] * atoms[l];
                    }
                }
            }
            let mut row = Vec::with_capacity(width);
            row.extend_from_slice(&z);
            row.push(quartic / three_delta);
            for l in 0..d {
                for k in 0..d {
                    let (lo, hi) = if k <= l { (k, l) } else { (l, k) };
                    row.push(delta * gram[lo + hi * d]);
                }
            }
            row
        })
        .collect();
    let v = Matrix::from_rows(&rows)?;

    let means = column_means(&v);
    let gamma_hat = means[..d].to_vec();
    let b_hat = means[d];
    let lambda_hat = Matrix::from_row_major(d, d, means[d + 1..].to_vec())?;

    if b_hat == T::zero() {
        return Err(Error::DegenerateData);
    }
    let proj = Projection::new(&gamma_hat, &lambda_hat)?;
    let s_hat = b_hat - proj.q;
    Ok(GofSummary {
        b_hat,
        gamma_hat,
        lambda_hat,
        s_hat,
        g_hat: s_hat / b_hat,
        v,
        d,
        particles,
        steps,
        delta,
        lambda_rcond: proj.rcond,
    })
}

/// Means over rows, accumulated in row order.
fn column_means<T: Scalar>(v: &Matrix<T>) -> Vec<T> {
    let mut sums = vec![T::zero(); v.cols()];
    for i in 0..v.rows() {
        for (s, &x) in sums.iter_mut().zip(v.row(i)) {
            *s = *s + x;
        }
    }
    let n = T::from_count(v.rows());
    sums.into_iter().map(|s| s / n).collect()
}

/// `u = Λ⁻¹Γ` and `q = Γᵀu`, via Cholesky.
struct Projection<T> {
    u: Vec<T>,
    q: T,
    rcond: T,
}

impl<T: Scalar> Projection<T> {
    fn new(gamma: &[T], lambda: &Matrix<T>) -> Result<Self> {
        if !lambda.is_square() || lambda.rows() != gamma.len() {
            return Err(Error::SizeMismatch {
                left: lambda.rows(),
                right: gamma.len(),
            });
        }
        let (chol, rcond) = factor_spd(lambda)?;
        let u = chol.solve(gamma);
        let q = gamma.iter().zip(&u).map(|(&g, &x)| g * x).sum();
        Ok(Self { u, q, rcond })
    }

    /// `vec(u uᵀ)`, column-major.
    fn outer_vec(&self, scale: T) -> impl Iterator<Item = T> + '_ {
        let d = self.u.len();
        (0..d * d).map(move |idx| scale * self.u[idx % d] * self.u[idx / d])
    }
}

/// `g(Γ, B, Λ) = B − Γᵀ Λ⁻¹ Γ`, the squared L² distance from the true
/// squared volatility to the span of the basis.
pub fn closed_form_distance<T: Scalar>(gamma: &[T], b: T, lambda: &Matrix<T>) -> Result<T> {
    Ok(b - Projection::new(gamma, lambda)?.q)
}

/// `h(Γ, B, Λ) = g / B = 1 − Γᵀ Λ⁻¹ Γ / B`.
pub fn relative_distance<T: Scalar>(gamma: &[T], b: T, lambda: &Matrix<T>) -> Result<T> {
    Ok(T::one() - Projection::new(gamma, lambda)?.q / b)
}

/// `∇g = (−2Λ⁻¹Γ, 1, vec(Λ⁻¹ΓΓᵀΛ⁻¹))`, laid out like a `V̂` row.
///
/// The `Λ` block is the entrywise derivative treating all `d²` entries as
/// free; this is the form the delta method needs because `vec Ẑ_Λ` carries
/// both copies of every off-diagonal entry.
pub fn grad_g<T: Scalar>(gamma: &[T], _b: T, lambda: &Matrix<T>) -> Result<Vec<T>> {
    let p = Projection::new(gamma, lambda)?;
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(influence_width(gamma.len()));
    out.extend(p.u.iter().map(|&x| -two * x));
    out.push(T::one());
    out.extend(p.outer_vec(T::one()));
    Ok(out)
}

/// Gradient of `h = 1 − ΓᵀΛ⁻¹Γ / B`:
/// `(−2Λ⁻¹Γ / B, ΓᵀΛ⁻¹Γ / B², vec(Λ⁻¹ΓΓᵀΛ⁻¹) / B)`.
pub fn grad_relative<T: Scalar>(gamma: &[T], b: T, lambda: &Matrix<T>) -> Result<Vec<T>> {
    let p = Projection::new(gamma, lambda)?;
    let two = T::lit(2.0);
    let mut out = Vec::with_capacity(influence_width(gamma.len()));
    out.extend(p.u.iter().map(|&x| -two * x / b));
    out.push(p.q / (b * b));
    out.extend(p.outer_vec(T::one() / b));
    Ok(out)
}

/// `Σ̂ = (1/N) Σ_i (V̂^i − V̄)(V̂^i − V̄)ᵀ`.
pub fn covariance_hat<T: Scalar>(v: &Matrix<T>) -> Result<Matrix<T>> {
    let n = v.rows();
    if n < 2 {
        return Err(Error::InsufficientParticles(n));
    }
    let m = v.cols();
    let mean = column_means(v);
    let mut sigma = Matrix::zeros(m, m);
    let mut centered = vec![T::zero(); m];
    for i in 0..n {
        for ((c, &x), &mu) in centered.iter_mut().zip(v.row(i)).zip(&mean) {
            *c = x - mu;
        }
        for p in 0..m {
            for q in p..m {
                sigma[(p, q)] = sigma[(p, q)] + centered[p] * centered[q];
            }
        }
    }
    let nn = T::from_count(n);
    for p in 0..m {
        for q in p..m {
            let s = sigma[(p, q)] / nn;
            sigma[(p, q)] = s;
            sigma[(q, p)] = s;
        }
    }
    Ok(sigma)
}

fn clamp_rounding<T: Scalar>(x: T) -> T {
    if x < T::zero() && x >= -T::lit(NEGATIVE_ROUNDING_SLACK) {
        T::zero()
    } else {
        x
    }
}

/// `τ̂² = ∇gᵀ Σ̂ ∇g` at the estimated `(Γ̂, B̂, Λ̂)`.
pub fn tau2_hat<T: Scalar>(summary: &GofSummary<T>) -> Result<T> {
    let grad = grad_g(&summary.gamma_hat, summary.b_hat, &summary.lambda_hat)?;
    let sigma = covariance_hat(&summary.v)?;
    Ok(clamp_rounding(sigma.quadratic_form(&grad)))
}

/// Delta-method variance of `Ĝ`: `∇hᵀ Σ̂ ∇h`.
pub fn tau2_relative_hat<T: Scalar>(summary: &GofSummary<T>) -> Result<T> {
    let grad = grad_relative(&summary.gamma_hat, summary.b_hat, &summary.lambda_hat)?;
    let sigma = covariance_hat(&summary.v)?;
    Ok(clamp_rounding(sigma.quadratic_form(&grad)))
}

/// Which null hypothesis is tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestMode {
    /// `H0: L = 0`.
    Absolute,
    /// `H0: G ≤ delta` with `0 < delta < 1`.
    Relative { delta: f64 },
}

impl TestMode {
    pub fn name(&self) -> &'static str {
        match self {
            TestMode::Absolute => "absolute",
            TestMode::Relative { .. } => "relative",
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            TestMode::Absolute => None,
            TestMode::Relative { delta } => Some(*delta),
        }
    }
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(serialize_with = "num17")]
    pub b_hat: f64,
    #[serde(serialize_with = "num17")]
    pub s_hat: f64,
    #[serde(serialize_with = "num17")]
    pub g_hat: f64,
    #[serde(serialize_with = "num17")]
    pub critical_value: f64,
    #[serde(serialize_with = "num17")]
    pub lambda_rcond: f64,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "n")]
    pub steps: usize,
    #[serde(serialize_with = "num17")]
    pub delta: f64,
    pub d: usize,
    /// `N Δ²`; the asymptotics need this small.
    #[serde(serialize_with = "num17")]
    pub rate_condition: f64,
    pub warnings: Vec<String>,
}

/// Outcome of one test. In relative mode `tau2_hat` is the variance of `Ĝ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    #[serde(serialize_with = "num17")]
    pub statistic: f64,
    #[serde(serialize_with = "num17")]
    pub tau2_hat: f64,
    #[serde(serialize_with = "num17")]
    pub p_value: f64,
    #[serde(serialize_with = "num17")]
    pub alpha: f64,
    pub reject: bool,
    pub mode: String,
    #[serde(serialize_with = "opt_num17")]
    pub delta_threshold: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// One-sided rejection rule `statistic > z_{1−α}` (strict).
pub fn reject_rule(statistic: f64, alpha: f64) -> bool {
    statistic > normal_quantile(1.0 - alpha)
}

fn validate_test_args(alpha: f64, mode: TestMode) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if let TestMode::Relative { delta } = mode {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relative threshold must lie in (0, 1), got {delta}"
            )));
        }
    }
    Ok(())
}

/// Applies the decision rule to a computed summary.
pub fn decide<T: Scalar>(summary: &GofSummary<T>, alpha: f64, mode: TestMode) -> Result<TestReport> {
    validate_test_args(alpha, mode)?;
    let root_n = (summary.particles as f64).sqrt();
    let (tau2, centred) = match mode {
        TestMode::Absolute => (tau2_hat(summary)?.widen(), summary.s_hat.widen()),
        TestMode::Relative { delta } => (
            tau2_relative_hat(summary)?.widen(),
            summary.g_hat.widen() - delta,
        ),
    };
    if !(tau2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let statistic = root_n * centred / tau2.sqrt();
    let critical_value = normal_quantile(1.0 - alpha);

    let delta = summary.delta.widen();
    let rate_condition = summary.particles as f64 * delta * delta;
    let mut warnings = Vec::new();
    if rate_condition > 1.0 {
        let msg = format!("N*delta^2 = {rate_condition:.3e} > 1; the normal approximation may be poor");
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(TestReport {
        statistic,
        tau2_hat: tau2,
        p_value: normal_sf(statistic),
        alpha,
        reject: statistic > critical_value,
        mode: mode.name().to_string(),
        delta_threshold: mode.delta(),
        diagnostics: Diagnostics {
            b_hat: summary.b_hat.widen(),
            s_hat: summary.s_hat.widen(),
            g_hat: summary.g_hat.widen(),
            critical_value,
            lambda_rcond: summary.lambda_rcond.widen(),
            particles: summary.particles,
            steps: summary.steps,
            delta,
            d: summary.d,
            rate_condition,
            warnings,
        },
    })
}

/// Computes the summary for `grid` and applies the test.
pub fn run_test<T: Scalar>(
    grid: &ObservationGrid<T>,
    basis: &BasisFamily<T>,
    alpha: f64,
    mode: TestMode,
) -> Result<TestReport> {
    validate_test_args(alpha, mode)?;
    let summary = compute_summary(grid, basis)?;
    decide(&summary, alpha, mode)
}
