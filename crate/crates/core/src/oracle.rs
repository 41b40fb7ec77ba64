//! Independent reference computations used to validate the pipeline.
//!
//! Nothing here reuses the numerical kernels it checks: couplings are
//! enumerated instead of sorted, linear systems are solved by Gaussian
//! elimination instead of Cholesky, gradients come from central
//! differences, and population quantities are accumulated time-major with
//! the true squared diffusion plugged in instead of squared increments.
//! Everything runs single-threaded apart from the shared particle simulator.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::json::num17;
use crate::linalg::Matrix;
use crate::measures::EmpiricalMeasure;
use crate::models::{parse_basis, BasisFamily, McKeanVlasovModel, ModelSpec};
use crate::simulate::simulate_streaming;

/// Largest size accepted by [`w2_bruteforce`] (8! couplings).
pub const BRUTE_FORCE_MAX: usize = 8;

/// Minimum over all permutation couplings of `sqrt((1/N) Σ (x_i − y_π(i))²)`.
pub fn w2_bruteforce(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.size() != nu.size() {
        return Err(Error::SizeMismatch {
            left: mu.size(),
            right: nu.size(),
        });
    }
    let n = mu.size();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLarge(n));
    }
    let x = mu.samples();
    let y = nu.samples();
    let cost = |perm: &[usize]| -> f64 {
        let mut c = 0.0;
        for i in 0..n {
            let diff = x[i] - y[perm[i]];
            c += diff * diff;
        }
        c
    };
    // Heap's algorithm
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let mut best = cost(&perm);
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(cost(&perm));
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_by_elimination(a: &Matrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.rows() != n || a.cols() != n {
        return Err(Error::SizeMismatch {
            left: a.rows(),
            right: n,
        });
    }
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = a.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| aug[p][col].abs().total_cmp(&aug[q][col].abs()))
            .unwrap_or(col);
        if !(aug[pivot][col].abs() > 1e-14 * scale) {
            return Err(Error::SingularLambda { rcond: 0.0 });
        }
        aug.swap(col, pivot);
        for r in col + 1..n {
            let f = aug[r][col] / aug[col][col];
            let (top, bottom) = aug.split_at_mut(r);
            for (x, &p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = aug[r][n];
        for c in r + 1..n {
            s -= aug[r][c] * x[c];
        }
        x[r] = s / aug[r][r];
    }
    Ok(x)
}

/// `B − Γᵀ Λ⁻¹ Γ` via elimination.
pub fn distance_by_elimination(gamma: &[f64], b: f64, lambda: &Matrix<f64>) -> Result<f64> {
    let x = solve_by_elimination(lambda, gamma)?;
    Ok(b - gamma.iter().zip(&x).map(|(g, v)| g * v).sum::<f64>())
}

/// `1 − Γᵀ Λ⁻¹ Γ / B` via elimination.
pub fn relative_by_elimination(gamma: &[f64], b: f64, lambda: &Matrix<f64>) -> Result<f64> {
    Ok(distance_by_elimination(gamma, b, lambda)? / b)
}

fn fd_gradient<F>(f: F, gamma: &[f64], b: f64, lambda: &Matrix<f64>, step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64, &Matrix<f64>) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let d = gamma.len();
    let mut out = Vec::with_capacity(d * d + d + 1);
    for k in 0..d {
        let mut up = gamma.to_vec();
        let mut down = gamma.to_vec();
        up[k] += step;
        down[k] -= step;
        out.push((f(&up, b, lambda)? - f(&down, b, lambda)?) / (2.0 * step));
    }
    out.push((f(gamma, b + step, lambda)? - f(gamma, b - step, lambda)?) / (2.0 * step));
    // Column-major over (k, l). Off-diagonal pairs move together by ±step/2
    // each so the perturbed matrix stays symmetric and the quotient is the
    // per-entry derivative.
    for l in 0..d {
        for k in 0..d {
            let h = if k == l { step } else { 0.5 * step };
            let mut up = lambda.clone();
            let mut down = lambda.clone();
            up[(k, l)] += h;
            down[(k, l)] -= h;
            if k != l {
                up[(l, k)] += h;
                down[(l, k)] -= h;
            }
            out.push((f(gamma, b, &up)? - f(gamma, b, &down)?) / (2.0 * step));
        }
    }
    Ok(out)
}

/// Central-difference gradient of `g(Γ, B, Λ)` in the `V̂` row layout.
pub fn grad_fd(gamma: &[f64], b: f64, lambda: &Matrix<f64>, step: f64) -> Result<Vec<f64>> {
    fd_gradient(distance_by_elimination, gamma, b, lambda, step)
}

/// Central-difference gradient of `h = g / B`.
pub fn grad_relative_fd(gamma: &[f64], b: f64, lambda: &Matrix<f64>, step: f64) -> Result<Vec<f64>> {
    fd_gradient(relative_by_elimination, gamma, b, lambda, step)
}

/// `max_i |a_i − b_i| / max_i |b_i|`.
pub fn relative_error(a: &[f64], reference: &[f64]) -> f64 {
    let num = a
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = reference.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Deterministic generator for test instances.
pub struct InstanceRng(ChaCha8Rng);

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    /// `(Γ, B, Λ)` with `Λ = AAᵀ + ½I`, entries of `A` and `Γ` uniform.
    pub fn pd_instance(&mut self, d: usize) -> (Vec<f64>, f64, Matrix<f64>) {
        let a: Vec<f64> = (0..d * d).map(|_| self.uniform(-1.0, 1.0)).collect();
        let mut lambda = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = if i == j { 0.5 } else { 0.0 };
                for k in 0..d {
                    s += a[i * d + k] * a[j * d + k];
                }
                lambda[(i, j)] = s;
            }
        }
        let gamma = (0..d).map(|_| self.uniform(-2.0, 2.0)).collect();
        let b = self.uniform(1.0, 5.0);
        (gamma, b, lambda)
    }
}

/// Population quantities approximated by a large fine-grid particle run.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceDistance {
    #[serde(serialize_with = "num17")]
    pub l_ref: f64,
    #[serde(serialize_with = "num17")]
    pub b_ref: f64,
    pub gamma_ref: Vec<f64>,
    pub lambda_ref: Vec<f64>,
    pub particles: usize,
    pub steps: usize,
    #[serde(serialize_with = "num17")]
    pub horizon: f64,
    pub seed: u64,
}

impl ReferenceDistance {
    pub fn lambda_matrix(&self) -> Matrix<f64> {
        let d = self.gamma_ref.len();
        Matrix::from_row_major(d, d, self.lambda_ref.clone()).expect("square by construction")
    }
}

/// Riemann-sum approximation of `B`, `Γ`, `Λ` and `L` from one particle run,
/// with the model's true `a²` plugged in and particle averages standing in
/// for integrals against `μ_t`.
pub fn reference_distance<M>(
    model: &M,
    basis: &BasisFamily,
    particles: usize,
    steps: usize,
    horizon: f64,
    seed: u64,
) -> Result<ReferenceDistance>
where
    M: McKeanVlasovModel<f64> + ?Sized,
{
    let d = basis.d();
    let mut b_sum = 0.0;
    let mut gamma_sum = vec![0.0; d];
    let mut lambda_sum = vec![0.0; d * d];
    let mut atoms = vec![0.0; d];
    let mut failure = None;
    simulate_streaming(model, particles, steps, horizon, seed, |j, column, mu| {
        let mut b_col = 0.0;
        let mut gamma_col = vec![0.0; d];
        let mut lambda_col = vec![0.0; d * d];
        for (i, &x) in column.iter().enumerate() {
            let a2 = model.diffusion_sq(x, mu);
            if !a2.is_finite() && failure.is_none() {
                failure = Some(Error::CoefficientEvaluation {
                    particle: i,
                    step: j,
                    what: "non-finite squared diffusion".into(),
                });
            }
            basis.eval_into(x, mu, &mut atoms);
            b_col += a2 * a2;
            for k in 0..d {
                gamma_col[k] += atoms[k] * a2;
                for l in 0..d {
                    lambda_col[k * d + l] += atoms[k] * atoms[l];
                }
            }
        }
        b_sum += b_col;
        for k in 0..d {
            gamma_sum[k] += gamma_col[k];
        }
        for (t, c) in lambda_sum.iter_mut().zip(&lambda_col) {
            *t += c;
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let w = (horizon / steps as f64) / particles as f64;
    let b_ref = w * b_sum;
    let gamma_ref: Vec<f64> = gamma_sum.iter().map(|s| w * s).collect();
    let lambda_ref: Vec<f64> = lambda_sum.iter().map(|s| w * s).collect();
    let lambda = Matrix::from_row_major(d, d, lambda_ref.clone())?;
    let l_ref = distance_by_elimination(&gamma_ref, b_ref, &lambda)?;
    Ok(ReferenceDistance {
        l_ref,
        b_ref,
        gamma_ref,
        lambda_ref,
        particles,
        steps,
        horizon,
        seed,
    })
}

/// Least-squares slope of `ln mean|ΔX|^p` against `ln Δ` over the step
/// counts in `steps_list`, one independent run per entry.
pub fn moment_scaling_check<M>(
    model: &M,
    p: u32,
    steps_list: &[usize],
    particles: usize,
    horizon: f64,
    seed: u64,
) -> Result<f64>
where
    M: McKeanVlasovModel<f64> + ?Sized,
{
    if ![2, 4, 6].contains(&p) {
        return Err(Error::InvalidArgument(format!("p must be 2, 4 or 6, got {p}")));
    }
    if steps_list.len() < 3 {
        return Err(Error::InvalidArgument("need at least three step counts".into()));
    }
    let mut xs = Vec::with_capacity(steps_list.len());
    let mut ys = Vec::with_capacity(steps_list.len());
    for &steps in steps_list {
        let mut prev: Vec<f64> = Vec::new();
        let mut acc = 0.0;
        let last = simulate_streaming(model, particles, steps, horizon, seed, |_, column, _| {
            if !prev.is_empty() {
                for (a, b) in prev.iter().zip(column) {
                    acc += (b - a).abs().powi(p as i32);
                }
            }
            prev.clear();
            prev.extend_from_slice(column);
        })?;
        for (a, b) in prev.iter().zip(&last) {
            acc += (b - a).abs().powi(p as i32);
        }
        let mean = acc / (particles * steps) as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::NaNSlope(format!(
                "mean |increment|^{p} is {mean} at n = {steps}"
            )));
        }
        xs.push((horizon / steps as f64).ln());
        ys.push(mean.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::NaNSlope("step counts must differ".into()));
    }
    Ok(sxy / sxx)
}

/// Result of a named self-check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    #[serde(serialize_with = "num17")]
    pub worst: f64,
    #[serde(serialize_with = "num17")]
    pub tolerance: f64,
    pub detail: String,
}

pub const CHECK_NAMES: [&str; 5] = [
    "w2",
    "gradient",
    "relative-gradient",
    "exact-span",
    "moment-scaling",
];

/// Runs one of [`CHECK_NAMES`] with instances drawn from `seed`.
pub fn run_check(name: &str, seed: u64) -> Result<CheckOutcome> {
    let mut rng = InstanceRng::new(seed);
    let (worst, tolerance, detail) = match name {
        "w2" => {
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let n = 1 + rng.below(BRUTE_FORCE_MAX);
                let a: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let b: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let mu = EmpiricalMeasure::from_vec(a)?;
                let nu = EmpiricalMeasure::from_vec(b)?;
                worst = worst.max((mu.wasserstein2(&nu)? - w2_bruteforce(&mu, &nu)?).abs());
            }
            (worst, 1e-12, "100 random pairs of size <= 8".to_string())
        }
        "gradient" | "relative-gradient" => {
            let mut worst = 0.0f64;
            for d in 1..=3 {
                for _ in 0..20 {
                    let (gamma, b, lambda) = rng.pd_instance(d);
                    let (an, fd) = if name == "gradient" {
                        (
                            crate::gof::grad_g(&gamma, b, &lambda)?,
                            grad_fd(&gamma, b, &lambda, 1e-6)?,
                        )
                    } else {
                        (
                            crate::gof::grad_relative(&gamma, b, &lambda)?,
                            grad_relative_fd(&gamma, b, &lambda, 1e-6)?,
                        )
                    };
                    worst = worst.max(relative_error(&fd, &an));
                }
            }
            (worst, 1e-6, "20 random PD instances for each d in 1..=3".to_string())
        }
        "exact-span" => {
            let cases = [
                (
                    ModelSpec::new("state-vol", [("theta", 1.0), ("lambda1", 1.0), ("lambda2", 0.5)]),
                    "const,x2",
                ),
                (
                    ModelSpec::new("mv-ou", [("theta", 1.0), ("kappa", 0.5), ("sigma", 1.0)]),
                    "const",
                ),
            ];
            let mut worst = 0.0f64;
            for (spec, basis) in &cases {
                let r = reference_distance(&spec.build()?, &parse_basis(basis)?, 2000, 200, 1.0, seed)?;
                worst = worst.max(r.l_ref.abs() / r.b_ref);
            }
            (worst, 5e-3, "L_ref / B_ref on both null models".to_string())
        }
        "moment-scaling" => {
            let model = ModelSpec::new("mv-ou", [("theta", 1.0), ("kappa", 0.5), ("sigma", 1.0)]).build()?;
            let s2 = moment_scaling_check(&model, 2, &[100, 200, 400, 800], 500, 1.0, seed)?;
            let s4 = moment_scaling_check(&model, 4, &[100, 200, 400, 800], 500, 1.0, seed)?;
            let worst = ((s2 - 1.0).abs() / 0.15).max((s4 - 2.0).abs() / 0.2);
            (worst, 1.0, format!("slopes p=2: {s2:.4}, p=4: {s4:.4} (worst normalised deviation)"))
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown oracle check '{other}' (expected one of {})",
                CHECK_NAMES.join(", ")
            )))
        }
    };
    Ok(CheckOutcome {
        check: name.to_string(),
        passed: worst <= tolerance,
        worst,
        tolerance,
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_examples() {
        let mu = EmpiricalMeasure::from_samples(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(w2_bruteforce(&mu, &mu).unwrap(), 0.0);
        let a = EmpiricalMeasure::dirac(2.0).unwrap();
        let b = EmpiricalMeasure::dirac(-1.0).unwrap();
        assert_eq!(w2_bruteforce(&a, &b).unwrap(), 3.0);
        let x = EmpiricalMeasure::from_samples(&[0.0, 1.0]).unwrap();
        let y = EmpiricalMeasure::from_samples(&[0.5, 2.0]).unwrap();
        assert!((w2_bruteforce(&x, &y).unwrap() - 0.625f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn brute_force_limits() {
        let big = EmpiricalMeasure::from_vec((0..9).map(f64::from).collect()).unwrap();
        assert!(matches!(w2_bruteforce(&big, &big), Err(Error::TooLarge(9))));
        let a = EmpiricalMeasure::dirac(0.0).unwrap();
        assert!(matches!(
            w2_bruteforce(&a, &big),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn elimination_matches_closed_form() {
        let mut rng = InstanceRng::new(1);
        for d in 1..=4 {
            let (gamma, b, lambda) = rng.pd_instance(d);
            let e = distance_by_elimination(&gamma, b, &lambda).unwrap();
            let c = crate::gof::closed_form_distance(&gamma, b, &lambda).unwrap();
            assert!((e - c).abs() < 1e-12 * b.abs().max(1.0));
        }
        let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(
            distance_by_elimination(&[1.0, 1.0], 1.0, &singular),
            Err(Error::SingularLambda { .. })
        ));
    }

    #[test]
    fn fd_examples() {
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        let g = grad_fd(&[1.0], 2.0, &one, 1e-6).unwrap();
        assert!(relative_error(&g, &[-2.0, 1.0, 1.0]) < 1e-8);

        let lam = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let g = grad_fd(&[0.0, 0.0], 3.0, &lam, 1e-4).unwrap();
        let want = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(grad_fd(&[1.0], 1.0, &one, 0.0).is_err());
    }

    #[test]
    fn scaling_rejects_bad_arguments() {
        let m = ModelSpec::new("mv-ou", [("theta", 1.0), ("kappa", 0.0), ("sigma", 1.0)])
            .build()
            .unwrap();
        assert!(moment_scaling_check(&m, 3, &[10, 20, 40], 10, 1.0, 0).is_err());
        assert!(moment_scaling_check(&m, 2, &[10, 20], 10, 1.0, 0).is_err());
    }

    #[test]
    fn degenerate_dynamics_have_no_slope() {
        let m = ModelSpec::new("state-vol", [("theta", 0.0), ("lambda1", 0.0), ("lambda2", 0.0)])
            .build()
            .unwrap();
        assert!(matches!(
            moment_scaling_check(&m, 2, &[10, 20, 40], 10, 1.0, 0),
            Err(Error::NaNSlope(_))
        ));
    }

    #[test]
    fn unknown_check_is_rejected() {
        assert!(matches!(run_check("nope", 0), Err(Error::InvalidArgument(_))));
    }
}
