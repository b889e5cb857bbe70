use std::f64::consts::PI;

use chemotaxis_core::elliptic::{HelmholtzProblem, SpectralSolver};
use chemotaxis_core::grid::{integrate, Field, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rhs(grid: GridSpec, rng: &mut ChaCha8Rng) -> Field {
    Field::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn manufactured_error(n: usize) -> f64 {
    let g = GridSpec::new(n, n, 1.0, 2.0).unwrap();
    let exact = Field::from_fn(g, |x, y| (PI * x).cos() * (PI * y / 2.0).cos());
    let lambda = PI * PI + PI * PI / 4.0;
    let rhs = exact.scaled(1.0 + lambda);
    let phi = HelmholtzProblem::screened_poisson(g).unwrap().solve(&rhs).unwrap();
    phi.add_scaled(-1.0, &exact).unwrap().max_abs()
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    let errors: Vec<f64> = [32, 64, 128].iter().map(|&n| manufactured_error(n)).collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}, errors {errors:?}");
    }
}

#[test]
fn random_right_hand_sides_meet_residual_and_mean_identity() {
    let g = GridSpec::new(48, 40, 1.0, 0.8).unwrap();
    let problem = HelmholtzProblem::new(g, 1.0, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let rhs = random_rhs(g, &mut rng);
        let phi = problem.solve(&rhs).unwrap();
        assert!(problem.relative_residual(&phi, &rhs).unwrap() <= 1e-10);
        let mean_gap = (integrate(&phi) - integrate(&rhs)).abs();
        assert!(mean_gap <= 1e-9 * integrate(&rhs.map(f64::abs)));
    }
}

#[test]
fn solve_is_linear() {
    let g = GridSpec::unit_square(32).unwrap();
    let problem = HelmholtzProblem::screened_poisson(g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (r1, r2) = (random_rhs(g, &mut rng), random_rhs(g, &mut rng));
    let (a, b) = (2.5, -0.75);
    let combined = problem.solve(&r1.scaled(a).add_scaled(b, &r2).unwrap()).unwrap();
    let separate = problem
        .solve(&r1)
        .unwrap()
        .scaled(a)
        .add_scaled(b, &problem.solve(&r2).unwrap())
        .unwrap();
    let diff = combined.add_scaled(-1.0, &separate).unwrap().max_abs();
    assert!(diff <= 1e-9 * combined.max_abs(), "{diff}");
}

#[test]
fn nonnegative_data_gives_nonnegative_solution() {
    let g = GridSpec::unit_square(40).unwrap();
    let problem = HelmholtzProblem::screened_poisson(g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let rhs = random_rhs(g, &mut rng).map(|v| v.max(0.0) * 10.0);
        let phi = problem.solve(&rhs).unwrap();
        assert!(phi.min() >= -10.0 * problem.tol * rhs.max_abs());
    }
}

#[test]
fn spectral_backend_agrees_with_cg() {
    let g = GridSpec::new(64, 48, 1.0, 0.75).unwrap();
    let spectral = SpectralSolver::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for (shift, scale) in [(1.0, 1.0), (1.0, 1e-3), (1.01, 0.01)] {
        let problem = HelmholtzProblem::new(g, shift, scale).unwrap().with_tol(1e-13);
        for _ in 0..5 {
            let rhs = random_rhs(g, &mut rng);
            let a = problem.solve(&rhs).unwrap();
            let b = spectral.solve(&problem, &rhs).unwrap();
            let rel = a.add_scaled(-1.0, &b).unwrap().norm2() / a.norm2();
            assert!(rel <= 1e-9, "{rel}");
        }
    }
}
