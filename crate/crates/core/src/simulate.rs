//! Euler–Maruyama simulation of the interacting particle system.
//!
//! All particles advance together on the observation grid `t_j = T j / n`:
//!
//! ```text
//! X^i_{j+1} = X^i_j + b(X^i_j, μ^N_j) Δ + sqrt(a²(X^i_j, μ^N_j)) sqrt(Δ) ξ^i_j
//! ```
//!
//! where `μ^N_j` is the empirical measure of column `j`, rebuilt every step,
//! and `ξ^i_j` is draw `j + 1` of particle `i`'s noise stream (see
//! [`crate::rng`]). Particles are updated in parallel; each update reads
//! only column `j` and its own stream, so output is bit-identical for any
//! thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::models::McKeanVlasovModel;
use crate::rng::ParticleStream;
use crate::scalar::Scalar;

/// Observation panel `X^i_{t_j}`, `i = 0..N`, `j = 0..=n`.
///
/// Stored time-major: column `j` (all particles at `t_j`) is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrid<T: Scalar = f64> {
    values: Vec<T>,
    particles: usize,
    steps: usize,
    horizon: T,
    seed: u64,
    model_name: String,
    params: BTreeMap<String, f64>,
}

impl<T: Scalar> ObservationGrid<T> {
    /// Assembles a grid from particle rows (`rows[i][j]`), e.g. real data.
    pub fn from_rows(
        rows: &[Vec<T>],
        horizon: T,
        seed: u64,
        model_name: impl Into<String>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self> {
        let particles = rows.len();
        if particles == 0 {
            return Err(Error::EmptySample);
        }
        let width = rows[0].len();
        if width < 2 {
            return Err(Error::Data("grid needs at least two observation times".into()));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::Data("horizon must be positive and finite".into()));
        }
        let mut values = vec![T::zero(); particles * width];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::SizeMismatch {
                    left: width,
                    right: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteInput {
                        index: i * width + j,
                    });
                }
                values[j * particles + i] = v;
            }
        }
        Ok(Self {
            values,
            particles,
            steps: width - 1,
            horizon,
            seed,
            model_name: model_name.into(),
            params,
        })
    }

    /// Number of particles `N`.
    pub fn particles(&self) -> usize {
        self.particles
    }

    /// Number of steps `n`; the grid has `n + 1` columns.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `Δ = T / n`.
    pub fn delta(&self) -> T {
        self.horizon / T::from_count(self.steps)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    #[inline]
    pub fn value(&self, particle: usize, step: usize) -> T {
        self.values[step * self.particles + particle]
    }

    /// All particles at time `t_j`.
    pub fn column(&self, step: usize) -> &[T] {
        &self.values[step * self.particles..(step + 1) * self.particles]
    }

    /// Path of one particle.
    pub fn row(&self, particle: usize) -> Vec<T> {
        (0..=self.steps).map(|j| self.value(particle, j)).collect()
    }

    /// Empirical measure of column `j`.
    pub fn measure(&self, step: usize) -> Result<EmpiricalMeasure<T>> {
        EmpiricalMeasure::from_samples(self.column(step))
    }

    /// Grid with particle `i` moved to row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.particles {
            return Err(Error::SizeMismatch {
                left: self.particles,
                right: perm.len(),
            });
        }
        let mut values = vec![T::zero(); self.values.len()];
        for j in 0..=self.steps {
            for (i, &p) in perm.iter().enumerate() {
                values[j * self.particles + p] = self.value(i, j);
            }
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }
}

/// Advances the particle system and hands each left-endpoint column to
/// `observe(j, column_j, μ^N_j)` for `j = 0..n`. Returns the final column
/// `X_{t_n}`. Nothing but the current column is kept in memory.
pub fn simulate_streaming<T, M, F>(
    model: &M,
    particles: usize,
    steps: usize,
    horizon: T,
    seed: u64,
    mut observe: F,
) -> Result<Vec<T>>
where
    T: Scalar,
    M: McKeanVlasovModel<T> + ?Sized,
    F: FnMut(usize, &[T], &EmpiricalMeasure<T>),
{
    if particles == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidArgument("T must be positive and finite".into()));
    }
    let dt = horizon / T::from_count(steps);
    let sqrt_dt = dt.sqrt();
    let law = model.initial_law();

    let mut streams: Vec<ParticleStream> = (0..particles as u64)
        .map(|i| ParticleStream::new(seed, i))
        .collect();
    let mut current: Vec<T> = streams
        .par_iter_mut()
        .map(|s| law.mean + law.sd * T::lit(s.next_normal()))
        .collect();
    if let Some(i) = current.iter().position(|x| !x.is_finite()) {
        return Err(Error::NumericalBlowup { particle: i, step: 0 });
    }

    for step in 0..steps {
        let mu = EmpiricalMeasure::from_samples(&current)?;
        observe(step, &current, &mu);
        let next: Vec<Result<T>> = current
            .par_iter()
            .zip(streams.par_iter_mut())
            .enumerate()
            .map(|(particle, (&x, stream))| {
                let xi = T::lit(stream.next_normal());
                let a2 = model.diffusion_sq(x, &mu);
                if !(a2 >= T::zero()) || !a2.is_finite() {
                    return Err(Error::CoefficientEvaluation {
                        particle,
                        step,
                        what: format!("squared diffusion = {a2:e}"),
                    });
                }
                let b = model.drift(x, &mu);
                let y = x + b * dt + a2.sqrt() * sqrt_dt * xi;
                if !y.is_finite() {
                    return Err(Error::NumericalBlowup {
                        particle,
                        step: step + 1,
                    });
                }
                Ok(y)
            })
            .collect();
        // sequential scan so the reported failure is the lowest index
        current = next.into_iter().collect::<Result<Vec<T>>>()?;
    }
    Ok(current)
}

/// Simulates `N` particles over `n` Euler steps on `[0, T]`.
pub fn simulate_particles<T, M>(
    model: &M,
    particles: usize,
    steps: usize,
    horizon: T,
    seed: u64,
) -> Result<ObservationGrid<T>>
where
    T: Scalar,
    M: McKeanVlasovModel<T> + ?Sized,
{
    let mut values = Vec::with_capacity(particles.saturating_mul(steps + 1));
    let last = simulate_streaming(model, particles, steps, horizon, seed, |_, column, _| {
        values.extend_from_slice(column)
    })?;
    values.extend_from_slice(&last);
    Ok(ObservationGrid {
        values,
        particles,
        steps,
        horizon,
        seed,
        model_name: model.name().to_string(),
        params: model.params(),
    })
}

/// Keeps every `factor`-th column.
pub fn subsample<T: Scalar>(grid: &ObservationGrid<T>, factor: usize) -> Result<ObservationGrid<T>> {
    if factor == 0 || !grid.steps.is_multiple_of(factor) {
        return Err(Error::BadFactor {
            factor,
            steps: grid.steps,
        });
    }
    let steps = grid.steps / factor;
    let mut values = Vec::with_capacity(grid.particles * (steps + 1));
    for j in 0..=steps {
        values.extend_from_slice(grid.column(j * factor));
    }
    Ok(ObservationGrid {
        values,
        steps,
        ..grid.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, CoefficientModel, ModelSpec};

    fn model(name: &str, kv: &[(&str, f64)]) -> CoefficientModel {
        ModelSpec::new(name, kv.iter().map(|(k, v)| (*k, *v))).build().unwrap()
    }

    #[test]
    fn degenerate_dynamics_keep_initial_draw() {
        let m = model(
            "state-vol",
            &[("theta", 0.0), ("lambda1", 0.0), ("lambda2", 0.0)],
        );
        let g = simulate_particles(&m, 20, 50, 1.0, 9).unwrap();
        for i in 0..20 {
            let x0 = g.value(i, 0);
            assert!(g.row(i).iter().all(|&x| x == x0));
        }
        // initial draws are N(0,1), not all equal
        assert!(g.column(0).iter().any(|&x| x != g.value(0, 0)));
    }

    #[test]
    fn same_inputs_same_grid() {
        let m = model("mean-vol", &[("theta", 1.0), ("sigma", 1.0), ("c", 0.5)]);
        let a = simulate_particles(&m, 64, 40, 1.0, 5).unwrap();
        let b = simulate_particles(&m, 64, 40, 1.0, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_particles(&m, 64, 40, 1.0, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_ode_limit() {
        let m = model(
            "mv-ou",
            &[("theta", 1.0), ("kappa", 0.0), ("sigma", 0.0), ("m0", 1.0), ("s0", 0.0)],
        );
        let g = simulate_particles(&m, 4, 1000, 1.0, 1).unwrap();
        for i in 0..4 {
            assert!((g.value(i, 1000) - (-1f64).exp()).abs() <= 5e-4);
        }
    }

    #[test]
    fn grid_shape_and_metadata() {
        let m = model("sin-vol", &[("theta", 1.0), ("eta", 1.0)]);
        let g = simulate_particles(&m, 7, 30, 1.5, 3).unwrap();
        assert_eq!(g.particles(), 7);
        assert_eq!(g.steps(), 30);
        assert_eq!(g.row(0).len(), 31);
        assert!(((g.delta() * 30.0) - 1.5).abs() <= 1e-12 * 1.5);
        assert_eq!(g.model_name(), "sin-vol");
        assert_eq!(g.params()["eta"], 1.0);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let m = model("mean-vol", &[("theta", 0.7), ("sigma", 1.0), ("c", 1.0)]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_particles(&m, 3000, 20, 1.0, 77).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert!(one
            .values
            .iter()
            .zip(&four.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn invalid_arguments() {
        let m = model("sin-vol", &[("theta", 1.0), ("eta", 1.0)]);
        assert!(simulate_particles(&m, 0, 10, 1.0, 0).is_err());
        assert!(simulate_particles(&m, 10, 0, 1.0, 0).is_err());
        assert!(simulate_particles(&m, 10, 10, -1.0, 0).is_err());
    }

    #[test]
    fn negative_squared_diffusion_is_located() {
        struct AlwaysNeg;
        impl McKeanVlasovModel<f64> for AlwaysNeg {
            fn name(&self) -> &str {
                "neg"
            }
            fn drift(&self, _: f64, _: &EmpiricalMeasure) -> f64 {
                0.0
            }
            fn diffusion_sq(&self, _: f64, _: &EmpiricalMeasure) -> f64 {
                -1.0
            }
            fn initial_law(&self) -> crate::models::GaussianLaw<f64> {
                crate::models::GaussianLaw { mean: 0.0, sd: 1.0 }
            }
        }
        assert!(matches!(
            simulate_particles(&AlwaysNeg, 3, 10, 1.0, 0),
            Err(Error::CoefficientEvaluation { particle: 0, step: 0, .. })
        ));
    }

    #[test]
    fn explosive_drift_is_blowup() {
        struct Explode;
        impl McKeanVlasovModel<f64> for Explode {
            fn name(&self) -> &str {
                "explode"
            }
            fn drift(&self, x: f64, _: &EmpiricalMeasure) -> f64 {
                x * x * 1e200
            }
            fn diffusion_sq(&self, _: f64, _: &EmpiricalMeasure) -> f64 {
                0.0
            }
            fn initial_law(&self) -> crate::models::GaussianLaw<f64> {
                crate::models::GaussianLaw { mean: 1e100, sd: 0.0 }
            }
        }
        assert!(matches!(
            simulate_particles(&Explode, 2, 5, 1.0, 0),
            Err(Error::NumericalBlowup { particle: 0, step: 1 })
        ));
    }

    #[test]
    fn subsample_index_arithmetic() {
        let m = model("sin-vol", &[("theta", 1.0), ("eta", 1.0)]);
        let g = simulate_particles(&m, 5, 100, 1.0, 3).unwrap();
        assert_eq!(subsample(&g, 1).unwrap(), g);
        let s = subsample(&g, 10).unwrap();
        assert_eq!(s.steps(), 10);
        assert!((s.delta() - 10.0 * g.delta()).abs() < 1e-15);
        for j in 0..=10 {
            assert_eq!(s.column(j), g.column(10 * j));
        }
        assert_eq!(s.seed(), g.seed());
        assert_eq!(s.model_name(), g.model_name());
        assert!(matches!(subsample(&g, 3), Err(Error::BadFactor { .. })));
        assert!(matches!(subsample(&g, 0), Err(Error::BadFactor { .. })));
    }

    #[test]
    fn subsampled_increments_scale_with_factor() {
        let m = model("mv-ou", &[("theta", 1.0), ("kappa", 0.0), ("sigma", 1.0)]);
        let mean_sq_increment = |g: &ObservationGrid| {
            let mut s = 0.0;
            for j in 0..g.steps() {
                for i in 0..g.particles() {
                    s += (g.value(i, j + 1) - g.value(i, j)).powi(2);
                }
            }
            s / (g.steps() * g.particles()) as f64
        };
        let (mut fine, mut coarse) = (0.0, 0.0);
        for rep in 0..200 {
            let g = simulate_particles(&m, 20, 100, 1.0, 1000 + rep).unwrap();
            fine += mean_sq_increment(&g);
            coarse += mean_sq_increment(&subsample(&g, 10).unwrap());
        }
        let ratio = coarse / fine;
        assert!((ratio / 10.0 - 1.0).abs() <= 0.15, "ratio {ratio}");
    }

    #[test]
    fn single_precision_simulation() {
        let m: CoefficientModel<f32> = build_model(
            "mv-ou",
            &[("theta", 1.0), ("kappa", 0.0), ("sigma", 0.0), ("m0", 1.0), ("s0", 0.0)]
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
        .unwrap();
        let g = simulate_particles(&m, 2, 1000, 1.0f32, 1).unwrap();
        assert!((g.value(0, 1000) - (-1f32).exp()).abs() <= 1e-3);
    }
}
