use proptest::prelude::*;

use fracstep::scalar::{log_space, theta};
use fracstep::{
    build_geometric_mesh, build_uniform_mesh, exact_power, scalar_error_sweep, scalar_grm,
    scalar_um, PadeRational, ScalarRunConfig, Scheme, TimeMesh,
};

const LAMBDA_MAX: f64 = 1e6;

fn grm(alpha: f64, delta: f64, m: usize, n: usize) -> ScalarRunConfig {
    ScalarRunConfig::new(alpha, delta, m, build_geometric_mesh(LAMBDA_MAX, n, None).unwrap()).unwrap()
}

fn um(alpha: f64, delta: f64, m: usize, n: usize) -> ScalarRunConfig {
    ScalarRunConfig::new(alpha, delta, m, build_uniform_mesh(n).unwrap()).unwrap()
}

fn sup_error(cfg: &ScalarRunConfig, scheme: Scheme, grid: &[f64]) -> f64 {
    scalar_error_sweep(grid, cfg, scheme)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max)
}

#[test]
fn exact_power_values() {
    assert_eq!(exact_power(1.0, 0.37), 1.0);
    assert_eq!(exact_power(4.0, 0.5), 0.5);
    assert!((exact_power(1000.0, 0.3) - 0.125_892_541_179_416_7).abs() < 1e-15);
}

#[test]
fn recurrences_are_exact_at_the_shift() {
    for cfg in [grm(0.3, 0.5, 2, 4), um(0.3, 0.5, 2, 4)] {
        assert_eq!(fracstep::scalar::scalar_run(0.5, &cfg).unwrap(), 0.5f64.powf(-0.3));
        assert!(fracstep::scalar::scalar_run(0.4, &cfg).is_err());
    }
    let cfg = grm(0.3, 0.5, 2, 4);
    assert_eq!(scalar_error_sweep(&[0.5], &cfg, Scheme::Grm).unwrap(), vec![0.0]);
    assert!(scalar_error_sweep(&[1.0], &cfg, Scheme::Um).is_err());
}

#[test]
fn single_uniform_step_closed_form() {
    let cfg = um(0.5, 0.5, 1, 1);
    let lambda = 40.0;
    let th = (lambda - 0.5) / 0.5;
    let expected = 0.5f64.powf(-0.5) * (1.0 + 0.25 * th) / (1.0 + 0.75 * th);
    assert!((scalar_um(lambda, &cfg).unwrap() - expected).abs() < 1e-14 * expected);
}

#[test]
fn doubling_n_quarters_the_first_order_error() {
    let e = |n| (exact_power(1000.0, 0.5) - scalar_grm(1000.0, &grm(0.5, 0.5, 1, n)).unwrap()).abs();
    let ratio = e(8) / e(16);
    assert!((ratio - 4.0).abs() < 0.6, "{ratio}");
}

#[test]
fn geometric_sup_error_constant_is_uniform_in_n() {
    let grid = log_space(1.0, LAMBDA_MAX, 1000);
    for m in [1, 2] {
        for alpha in [0.1, 0.5, 0.9] {
            let c: Vec<f64> = [8usize, 16, 32, 64]
                .iter()
                .map(|&n| sup_error(&grm(alpha, 0.5, m, n), Scheme::Grm, &grid) * (n as f64).powi(2 * m as i32))
                .collect();
            let (lo, hi) = c.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
            assert!(hi < 2.0 * lo, "m = {m}, α = {alpha}: {c:?}");
        }
    }
}

#[test]
fn uniform_sup_error_halves_by_root_two() {
    let grid = log_space(1.0, LAMBDA_MAX, 1000);
    let e: Vec<f64> = [16usize, 32, 64, 128]
        .iter()
        .map(|&n| sup_error(&um(0.5, 0.5, 1, n), Scheme::Um, &grid))
        .collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2f64.sqrt()).abs() < 0.2, "{ratio}");
    }
}

#[test]
fn uniform_error_is_bounded_by_smoothness_weighted_rates() {
    let grid = log_space(1.0, LAMBDA_MAX, 400);
    for m in [1, 2] {
        let alpha = 0.5;
        for gamma in [0.0, 1.0, 2.0 * m as f64 - alpha] {
            let c: Vec<f64> = [8usize, 16, 32, 64]
                .iter()
                .map(|&n| {
                    let cfg = um(alpha, 0.5, m, n);
                    let errs = scalar_error_sweep(&grid, &cfg, Scheme::Um).unwrap();
                    errs.iter()
                        .zip(&grid)
                        .map(|(e, l)| e * l.powf(-gamma) * (n as f64).powf(alpha + gamma))
                        .fold(0.0, f64::max)
                })
                .collect();
            assert!(c.iter().all(|&v| v <= 2.0 * c[0]), "m = {m}, γ = {gamma}: {c:?}");
        }
    }
}

fn mesh_strategy() -> impl Strategy<Value = TimeMesh> {
    prop_oneof![
        (1..6usize, 1..20usize).prop_map(|(l, n)| TimeMesh::geometric(l, n).unwrap()),
        (1..200usize).prop_map(|n| TimeMesh::uniform(n).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exact_factors_telescope(
        mesh in mesh_strategy(),
        alpha in 0.01..0.99f64,
        delta in 0.1..5.0f64,
        lift in 0.0..8.0f64,
    ) {
        let lambda = delta + 10f64.powf(lift) - 1.0;
        let product = mesh
            .steps()
            .iter()
            .fold(delta.powf(-alpha), |acc, s| acc * (1.0 + theta(lambda, delta, s.t, s.k)).powf(-alpha));
        let exact = lambda.powf(-alpha);
        prop_assert!((product - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn running_value_is_positive_and_nonincreasing(
        mesh in mesh_strategy(),
        alpha in 0.01..0.99f64,
        m in 1..=8usize,
        lift in 0.0..8.0f64,
    ) {
        let delta = 0.5;
        let lambda = delta + 10f64.powf(lift) - 1.0;
        let pade = PadeRational::new(m, alpha).unwrap();
        let mut mu = delta.powf(-alpha);
        for s in mesh.steps() {
            let next = mu * pade.eval(theta(lambda, delta, s.t, s.k));
            prop_assert!(next > 0.0 && next <= mu);
            mu = next;
        }
        let cfg = ScalarRunConfig::new(alpha, delta, m, mesh).unwrap();
        let direct = fracstep::scalar::scalar_run(lambda, &cfg).unwrap();
        prop_assert_eq!(direct, mu);
    }
}
