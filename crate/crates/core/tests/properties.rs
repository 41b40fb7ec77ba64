use mvgof::gof::covariance_hat;
use mvgof::oracle::{reference_distance, w2_bruteforce};
use mvgof::{
    closed_form_distance, compute_summary, parse_basis, simulate_particles, EmpiricalMeasure,
    Matrix, McKeanVlasovModel, ModelSpec, ObservationGrid,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn measure(v: Vec<f64>) -> EmpiricalMeasure {
    EmpiricalMeasure::from_vec(v).unwrap()
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// `Λ = AAᵀ + ½I` from a flat `d × d` draw.
fn pd_from(d: usize, raw: &[f64]) -> Matrix<f64> {
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| raw[i * d + k] * raw[j * d + k]).sum();
            m[(i, j)] = s + if i == j { 0.5 } else { 0.0 };
        }
    }
    m
}

fn sim(name: &str, kv: &[(&str, f64)], particles: usize, steps: usize, seed: u64) -> ObservationGrid {
    let model = ModelSpec::new(name, kv.iter().copied()).build().unwrap();
    simulate_particles(&model, particles, steps, 1.0, seed).unwrap()
}

fn triples(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| {
        let v = || prop::collection::vec(-100.0f64..100.0, n);
        (v(), v(), v())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn w2_triangle_inequality((a, b, c) in triples(40)) {
        let (mu, nu, rho) = (measure(a), measure(b), measure(c));
        let direct = mu.wasserstein2(&rho).unwrap();
        let via = mu.wasserstein2(&nu).unwrap() + nu.wasserstein2(&rho).unwrap();
        prop_assert!(direct <= via + 1e-12);
    }

    #[test]
    fn w2_translation_invariant((a, b, _) in triples(40), c in -50.0f64..50.0) {
        let (mu, nu) = (measure(a), measure(b));
        let base = mu.wasserstein2(&nu).unwrap();
        let moved = mu.shifted(c).unwrap().wasserstein2(&nu.shifted(c).unwrap()).unwrap();
        prop_assert!((moved - base).abs() <= 1e-12 * (1.0 + base.abs() + c.abs()));
    }

    #[test]
    fn w2_sorted_coupling_is_optimal((a, b, _) in triples(8)) {
        let (mu, nu) = (measure(a), measure(b));
        let fast = mu.wasserstein2(&nu).unwrap();
        let brute = w2_bruteforce(&mu, &nu).unwrap();
        prop_assert!((fast - brute).abs() <= 1e-12 * (1.0 + brute));
    }

    #[test]
    fn basis_values_ignore_sample_order(
        mut samples in prop::collection::vec(-10.0f64..10.0, 1..60),
        x in -10.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let basis = parse_basis::<f64>("const,x2,x4,expx:0.3,mean2,var").unwrap();
        let before = basis.eval(x, &measure(samples.clone()));
        let n = samples.len();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            samples.swap(i, (state >> 33) as usize % (i + 1));
        }
        let after = basis.eval(x, &measure(samples));
        prop_assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn distance_never_exceeds_b(
        d in 1usize..=4,
        raw in prop::collection::vec(-2.0f64..2.0, 16),
        gamma in prop::collection::vec(-3.0f64..3.0, 4),
        b in 0.0f64..10.0,
    ) {
        let lambda = pd_from(d, &raw);
        let g = closed_form_distance(&gamma[..d], b, &lambda).unwrap();
        prop_assert!(g <= b + 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn exact_span_gives_zero(
        d in 1usize..=4,
        raw in prop::collection::vec(-2.0f64..2.0, 16),
        lam in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let lambda = pd_from(d, &raw);
        let gamma = lambda.mul_vec(&lam[..d]);
        let b = lambda.quadratic_form(&lam[..d]);
        let g = closed_form_distance(&gamma, b, &lambda).unwrap();
        prop_assert!(g.abs() <= 1e-10 * (1.0 + b));
    }

    #[test]
    fn catalog_coefficients_have_linear_growth(
        which in 0usize..4,
        p in prop::collection::vec(0.0f64..2.0, 3),
        samples in prop::collection::vec(-10.0f64..10.0, 1..100),
        x in -10.0f64..10.0,
    ) {
        let spec = match which {
            0 => ModelSpec::new("mv-ou", [("theta", p[0]), ("kappa", p[1]), ("sigma", p[2])]),
            1 => ModelSpec::new("state-vol", [("theta", p[0]), ("lambda1", p[1]), ("lambda2", p[2])]),
            2 => ModelSpec::new("mean-vol", [("theta", p[0]), ("sigma", p[1]), ("c", p[2])]),
            _ => ModelSpec::new("sin-vol", [("theta", p[0]), ("eta", p[1])]),
        };
        let model = spec.build::<f64>().unwrap();
        let mu = measure(samples);
        let b = model.drift(x, &mu);
        let a2 = model.diffusion_sq(x, &mu);
        prop_assert!(b.is_finite() && a2.is_finite() && a2 >= 0.0);
        prop_assert!(b.abs() + a2 <= 20.0 * (1.0 + x * x + mu.moment(2)));
    }
}

#[test]
fn s_hat_is_invariant_to_atom_scaling() {
    let grid = sim("state-vol", &[("theta", 1.0), ("lambda1", 1.0), ("lambda2", 0.5)], 150, 80, 3);
    let basis = parse_basis("const,x2,expx:0.5").unwrap();
    let base = compute_summary(&grid, &basis).unwrap();
    for c in [0.01, 3.0, 250.0] {
        let scaled = compute_summary(&grid, &basis.scaled(c)).unwrap();
        assert!(rel_diff(scaled.s_hat, base.s_hat) <= 1e-10, "c = {c}");
        assert!(rel_diff(scaled.gamma_hat[0], c * base.gamma_hat[0]) <= 1e-12);
    }
}

#[test]
fn covariance_is_positive_semidefinite() {
    for (seed, spec) in [(1, "const"), (2, "const,x2"), (3, "const,x2,mean2")] {
        let grid = sim("mean-vol", &[("theta", 1.0), ("sigma", 1.0), ("c", 0.5)], 120, 60, seed);
        let summary = compute_summary(&grid, &parse_basis(spec).unwrap()).unwrap();
        let sigma = covariance_hat(&summary.v).unwrap();
        let p = sigma.rows();
        let m = DMatrix::from_row_slice(p, p, sigma.as_slice());
        let eig = m.symmetric_eigenvalues();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10 * sigma.trace(), "basis {spec}: min eigenvalue {min}");
    }
}

#[test]
fn particle_permutation_only_reassociates() {
    let grid = sim("sin-vol", &[("theta", 1.0), ("eta", 1.0)], 97, 50, 11);
    let basis = parse_basis("const,x2").unwrap();
    let perm: Vec<usize> = (0..97).map(|i| (i * 37 + 5) % 97).collect();
    let a = compute_summary(&grid, &basis).unwrap();
    let b = compute_summary(&grid.permuted(&perm).unwrap(), &basis).unwrap();
    assert!(rel_diff(b.b_hat, a.b_hat) <= 1e-10);
    for k in 0..2 {
        assert!(rel_diff(b.gamma_hat[k], a.gamma_hat[k]) <= 1e-10);
        for l in 0..2 {
            assert!(rel_diff(b.lambda_hat[(k, l)], a.lambda_hat[(k, l)]) <= 1e-10);
        }
    }
}

fn final_column(grid: &ObservationGrid) -> Vec<f64> {
    grid.column(grid.steps()).to_vec()
}

/// `size` evenly spaced order statistics of a sorted sample.
fn quantile_points(sorted: &[f64], size: usize) -> Vec<f64> {
    let m = sorted.len();
    (0..size).map(|k| sorted[(2 * k + 1) * m / (2 * size)]).collect()
}

#[test]
fn empirical_law_approaches_reference_as_n_grows() {
    let model = ModelSpec::new("mv-ou", [("theta", 1.0), ("kappa", 0.5), ("sigma", 1.0)])
        .build()
        .unwrap();
    let steps = 50;
    let reference = measure(final_column(&simulate_particles(&model, 10_000, steps, 1.0, 999_999).unwrap()));
    let median_w2sq = |particles: usize| {
        let target = measure(quantile_points(reference.samples(), particles));
        let mut v: Vec<f64> = (0..50)
            .map(|r| {
                let g = simulate_particles(&model, particles, steps, 1.0, 1_000 + r).unwrap();
                measure(final_column(&g)).wasserstein2(&target).unwrap().powi(2)
            })
            .collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[24] + v[25])
    };
    let (small, large) = (median_w2sq(100), median_w2sq(400));
    assert!(large < small, "N=100: {small}, N=400: {large}");
}

#[test]
fn reference_distance_is_stable_in_step_count() {
    let model = ModelSpec::new("sin-vol", [("theta", 1.0), ("eta", 1.0)]).build().unwrap();
    let basis = parse_basis("const").unwrap();
    let l = |steps, seed| reference_distance(&model, &basis, 4_000, steps, 1.0, seed).unwrap().l_ref;
    let runs = |steps| (0..6).map(|s| l(steps, 50 + s)).collect::<Vec<f64>>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let coarse = runs(200);
    let spread = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - coarse.iter().copied().fold(f64::INFINITY, f64::min);
    let fine = runs(400);
    let moved = (mean(&fine) - mean(&coarse)).abs();
    assert!(moved < spread, "doubling n moved L_ref by {moved}, seed spread {spread}");
}

#[test]
fn reference_matches_closed_form_of_its_own_moments() {
    let model = ModelSpec::new("state-vol", [("theta", 1.0), ("lambda1", 1.0), ("lambda2", 0.5)])
        .build()
        .unwrap();
    let r = reference_distance(&model, &parse_basis("const,x4").unwrap(), 1_000, 100, 1.0, 4).unwrap();
    let fast = closed_form_distance(&r.gamma_ref, r.b_ref, &r.lambda_matrix()).unwrap();
    assert!((fast - r.l_ref).abs() <= 1e-10 * r.b_ref);
    assert!(r.l_ref > 0.0);
}
