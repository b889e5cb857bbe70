use std::f64::consts::PI;

use chemotaxis_core::grid::{
    chemotactic_divergence, chemotactic_divergence_with, gradient_sq_integral, integrate,
    laplacian, weighted_gradient_sq_integral, FaceAveraging, Field, GridSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(grid: GridSpec, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
    let values = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
    Field::new(grid, values).unwrap()
}

fn flip_x(f: &Field) -> Field {
    let g = *f.grid();
    Field::new(
        g,
        (0..g.len())
            .map(|k| {
                let (i, j) = g.cell(k);
                f.get(g.nx() - 1 - i, j)
            })
            .collect(),
    )
    .unwrap()
}

fn flip_y(f: &Field) -> Field {
    let g = *f.grid();
    Field::new(
        g,
        (0..g.len())
            .map(|k| {
                let (i, j) = g.cell(k);
                f.get(i, g.ny() - 1 - j)
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_sums_to_zero(seed in any::<u64>(), nx in 4usize..40, ny in 4usize..40,
                              lx in 0.1f64..10.0, ly in 0.1f64..10.0) {
        let g = GridSpec::new(nx, ny, lx, ly).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(g, &mut rng, -5.0, 5.0);
        let total = integrate(&laplacian(&f).unwrap());
        let scale = f.max_abs() * (nx * ny) as f64;
        prop_assert!(total.abs() <= 1e-12 * scale, "{total}");
    }

    #[test]
    fn chemotactic_divergence_sums_to_zero(seed in any::<u64>(), nx in 4usize..40, ny in 4usize..40,
                                           upwind in any::<bool>()) {
        let g = GridSpec::new(nx, ny, 1.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_field(g, &mut rng, 0.0, 10.0);
        let p = random_field(g, &mut rng, -3.0, 3.0);
        let avg = if upwind { FaceAveraging::Upwind } else { FaceAveraging::Arithmetic };
        let total = integrate(&chemotactic_divergence_with(&d, &p, avg).unwrap());
        let scale = d.max_abs() * p.max_abs() / g.hx().min(g.hy()) * (nx * ny) as f64;
        prop_assert!(total.abs() <= 1e-12 * scale, "{total}");
    }

    #[test]
    fn laplacian_commutes_with_reflections(seed in any::<u64>(), nx in 4usize..24, ny in 4usize..24) {
        let g = GridSpec::new(nx, ny, 2.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(g, &mut rng, -1.0, 1.0);
        let lf = laplacian(&f).unwrap();
        prop_assert_eq!(laplacian(&flip_x(&f)).unwrap(), flip_x(&lf));
        prop_assert_eq!(laplacian(&flip_y(&f)).unwrap(), flip_y(&lf));
    }

    #[test]
    fn laplacian_is_linear(seed in any::<u64>(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let g = GridSpec::new(12, 9, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(g, &mut rng, -1.0, 1.0);
        let h = random_field(g, &mut rng, -1.0, 1.0);
        let combo = f.scaled(a).add_scaled(b, &h).unwrap();
        let lhs = laplacian(&combo).unwrap();
        let rhs = laplacian(&f).unwrap().scaled(a).add_scaled(b, &laplacian(&h).unwrap()).unwrap();
        let scale = lhs.max_abs().max(rhs.max_abs()).max(1e-300);
        let diff = lhs.add_scaled(-1.0, &rhs).unwrap().max_abs();
        prop_assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn weighted_energy_bounded_by_plain_energy(seed in any::<u64>()) {
        let g = GridSpec::unit_square(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(g, &mut rng, 0.0, 4.0);
        let weighted = weighted_gradient_sq_integral(&f).unwrap();
        let plain = gradient_sq_integral(&f);
        prop_assert!(weighted >= 0.0);
        prop_assert!(weighted <= plain / std::f64::consts::E * (1.0 + 1e-12));
    }

    #[test]
    fn gradient_energy_is_quadratic(seed in any::<u64>(), alpha in -50.0f64..50.0) {
        let g = GridSpec::new(10, 14, 1.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(g, &mut rng, -1.0, 1.0);
        let lhs = gradient_sq_integral(&f.scaled(alpha));
        let rhs = alpha * alpha * gradient_sq_integral(&f);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }
}

#[test]
fn conservation_over_two_hundred_pairs_on_64_squared() {
    let g = GridSpec::unit_square(64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let d = random_field(g, &mut rng, 0.0, 10.0);
        let p = random_field(g, &mut rng, -10.0, 10.0);
        let n = g.len() as f64;
        let lap = integrate(&laplacian(&p).unwrap());
        assert!(lap.abs() <= 1e-12 * p.max_abs() * n);
        let div = integrate(&chemotactic_divergence(&d, &p).unwrap());
        assert!(div.abs() <= 1e-12 * d.max_abs() * p.max_abs() / g.hx() * n);
    }
}

#[test]
fn laplacian_converges_at_second_order() {
    // cos(pi x) cos(2 pi y) on [0,1] x [0,2] satisfies the Neumann condition.
    let exact = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
    let lap_exact = |x: f64, y: f64| -2.0 * PI * PI * exact(x, y);
    let errors: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&n| {
            let g = GridSpec::new(n, n, 1.0, 1.0).unwrap();
            let lap = laplacian(&Field::from_fn(g, exact)).unwrap();
            let reference = Field::from_fn(g, lap_exact);
            lap.add_scaled(-1.0, &reference).unwrap().max_abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "order {order}, errors {errors:?}");
    }
}

#[test]
fn sampled_cosine_integrates_to_zero() {
    let g = GridSpec::new(20, 8, 3.0, 1.5).unwrap();
    let f = Field::from_fn(g, |x, _| (2.0 * PI * x / 3.0).cos());
    assert!(integrate(&f).abs() <= 1e-12 * g.area());
}

#[test]
fn non_finite_input_names_the_cell() {
    let g = GridSpec::unit_square(8).unwrap();
    let mut f = Field::zeros(g);
    f.values_mut()[g.index(5, 2)] = f64::INFINITY;
    let msg = laplacian(&f).unwrap_err().to_string();
    assert!(msg.contains("(5, 2)"), "{msg}");
}
