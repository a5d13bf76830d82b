use proptest::prelude::*;
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracstep::stepper::Stepper;
use fracstep::{
    apply_pade_step, assemble_1d_uniform, assemble_2d_tensor, eig_1d, eig_2d_tensor,
    estimate_spectral_bounds, l2_project_case, m_norm, run_grm, run_um, scalar_grm, scalar_um,
    DataCase, DiscreteOperator, GridFunction, PadeRational, ScalarRunConfig, SolverPolicy,
    SpectralDecomposition, StepperConfig, TimeMesh,
};

fn random_function(op: &DiscreteOperator, rng: &mut ChaCha8Rng) -> GridFunction {
    let c = (0..op.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    op.grid_function(c).unwrap()
}

fn m_distance(op: &DiscreteOperator, a: &GridFunction, b: &[f64]) -> f64 {
    let d: Vec<f64> = a.coeffs().iter().zip(b).map(|(x, y)| x - y).collect();
    m_norm(op, &op.grid_function(d).unwrap()).unwrap()
}

struct Setup {
    op: DiscreteOperator,
    decomp: SpectralDecomposition,
    delta: f64,
    lambda_max: f64,
}

fn setup(intervals: usize) -> Setup {
    let op = assemble_1d_uniform(intervals).unwrap();
    let decomp = eig_1d(&op).unwrap();
    let bounds = estimate_spectral_bounds(&op).unwrap();
    Setup {
        delta: bounds.default_delta(),
        lambda_max: bounds.lambda_max_est,
        op,
        decomp,
    }
}

fn meshes(lambda_max: f64, n: usize) -> [TimeMesh; 2] {
    [
        fracstep::build_geometric_mesh(lambda_max, n, None).unwrap(),
        TimeMesh::uniform(n).unwrap(),
    ]
}

fn vector_run(s: &Setup, v: &GridFunction, alpha: f64, m: usize, mesh: &TimeMesh) -> GridFunction {
    let cfg = StepperConfig {
        alpha,
        m,
        delta: s.delta,
        mesh: mesh.clone(),
        solver: SolverPolicy::DirectBanded,
    };
    if mesh.is_geometric() {
        run_grm(v, &s.op, &cfg).unwrap()
    } else {
        run_um(v, &s.op, &cfg).unwrap()
    }
}

fn scalar_symbol(s: &Setup, alpha: f64, m: usize, mesh: &TimeMesh) -> Vec<f64> {
    let cfg = ScalarRunConfig::new(alpha, s.delta, m, mesh.clone()).unwrap();
    s.decomp
        .lambdas()
        .into_iter()
        .map(|lambda| {
            if mesh.is_geometric() {
                scalar_grm(lambda, &cfg).unwrap()
            } else {
                scalar_um(lambda, &cfg).unwrap()
            }
        })
        .collect()
}

#[test]
fn eigenvectors_follow_the_scalar_recurrence() {
    let s = setup(150);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let modes = sample(&mut rng, s.op.num_dofs(), 10).into_vec();
    for (alpha, m, n) in [(0.5, 1, 4), (0.1, 2, 3), (0.9, 2, 8)] {
        for mesh in meshes(s.lambda_max, n) {
            let mu = scalar_symbol(&s, alpha, m, &mesh);
            for &j in &modes {
                let psi = s.op.grid_function(s.decomp.mode(j)).unwrap();
                let out = vector_run(&s, &psi, alpha, m, &mesh);
                let expected: Vec<f64> = psi.coeffs().iter().map(|v| mu[j] * v).collect();
                let err = m_distance(&s.op, &out, &expected) / mu[j].abs();
                assert!(err < 1e-10, "mode {j}, α = {alpha}, m = {m}: {err:e}");
            }
        }
    }
}

#[test]
fn dense_data_matches_the_mode_by_mode_reconstruction() {
    let s = setup(150);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (alpha, m) in [(0.3, 1), (0.7, 2)] {
        for mesh in meshes(s.lambda_max, 4) {
            let mu = scalar_symbol(&s, alpha, m, &mesh);
            let v = random_function(&s.op, &mut rng);
            let out = vector_run(&s, &v, alpha, m, &mesh);
            let mut c = s.decomp.coefficients(&v).unwrap();
            c.iter_mut().zip(&mu).for_each(|(cj, mj)| *cj *= mj);
            let expected = s.decomp.synthesize(&c);
            let scale = m_norm(&s.op, &out).unwrap();
            assert!(m_distance(&s.op, &out, &expected) < 1e-9 * scale);
        }
    }
}

#[test]
fn first_order_step_from_zero_matches_its_closed_form() {
    let s = setup(100);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let v = random_function(&s.op, &mut rng);
    let cfg = StepperConfig {
        alpha: 0.5,
        m: 1,
        delta: 0.5,
        mesh: TimeMesh::uniform(1).unwrap(),
        solver: SolverPolicy::DirectBanded,
    };
    let r = PadeRational::new(1, 0.5).unwrap();
    let out = apply_pade_step(&v, 0.0, 1.0, &r, &s.op, &cfg).unwrap();
    let expected = s
        .decomp
        .apply_function(&v, |lambda| {
            let theta = (lambda - 0.5) / 0.5;
            (1.0 + 0.25 * theta) / (1.0 + 0.75 * theta)
        })
        .unwrap();
    assert!(m_distance(&s.op, &out, &expected) < 1e-12 * m_norm(&s.op, &v).unwrap());
    let same = apply_pade_step(&v, 0.3, 0.0, &r, &s.op, &cfg).unwrap();
    assert_eq!(same.coeffs(), v.coeffs());
}

#[test]
fn geometric_runs_approach_the_reference_monotonically() {
    let s = setup(200);
    let f = l2_project_case(&s.op, DataCase::C).unwrap();
    let exact = s.decomp.reference_power(&f, 0.5).unwrap();
    let mut previous = f64::INFINITY;
    for n in [1, 2, 4, 8, 16] {
        let mesh = fracstep::build_geometric_mesh(s.lambda_max, n, None).unwrap();
        let u = vector_run(&s, &f, 0.5, 1, &mesh);
        let err = m_distance(&s.op, &u, exact.coeffs());
        assert!(err < previous || err < 1e-11, "N = {n}: {err:e} after {previous:e}");
        previous = err;
    }
}

#[test]
fn error_decays_at_order_two_m_in_neighbouring_norms() {
    let s = setup(200);
    let f = l2_project_case(&s.op, DataCase::B).unwrap();
    let exact = s.decomp.reference_power(&f, 0.5).unwrap();
    for sobolev in [-1.0, 0.0, 1.0] {
        let errors: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| {
                let mesh = fracstep::build_geometric_mesh(s.lambda_max, n, None).unwrap();
                let u = vector_run(&s, &f, 0.5, 1, &mesh);
                let d = u.lin_comb(1.0, &exact, -1.0).unwrap();
                s.decomp.discrete_sobolev_norm(&d, sobolev).unwrap()
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.3, "s = {sobolev}: order {order}");
        }
    }
}

#[test]
fn iterative_and_direct_solvers_agree_in_two_dimensions() {
    let op = assemble_2d_tensor(20).unwrap();
    let decomp = eig_2d_tensor(&op).unwrap();
    let f = l2_project_case(&op, DataCase::F).unwrap();
    let delta = 0.5 * decomp.lambda_min();
    let mesh = fracstep::build_geometric_mesh(decomp.lambda_max(), 2, None).unwrap();
    let run = |solver| {
        let cfg = StepperConfig {
            alpha: 0.5,
            m: 2,
            delta,
            mesh: mesh.clone(),
            solver,
        };
        run_grm(&f, &op, &cfg).unwrap()
    };
    let direct = run(SolverPolicy::DirectBanded);
    let iterative = run(SolverPolicy::iterative(1e-12));
    assert!(m_distance(&op, &iterative, direct.coeffs()) < 1e-10 * m_norm(&op, &direct).unwrap());
}

fn small() -> &'static Setup {
    static SETUP: std::sync::OnceLock<Setup> = std::sync::OnceLock::new();
    SETUP.get_or_init(|| setup(40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn schemes_are_linear(seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64, m in 1..=3usize) {
        let s = small();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (random_function(&s.op, &mut rng), random_function(&s.op, &mut rng));
        for mesh in meshes(s.lambda_max, 2) {
            let combined = vector_run(s, &u.lin_comb(a, &v, b).unwrap(), 0.4, m, &mesh);
            let separate = vector_run(s, &u, 0.4, m, &mesh)
                .lin_comb(a, &vector_run(s, &v, 0.4, m, &mesh), b)
                .unwrap();
            let scale = m_norm(&s.op, &separate).unwrap().max(1e-300);
            prop_assert!(m_distance(&s.op, &combined, separate.coeffs()) <= 1e-11 * scale.max(1.0));
        }
    }

    #[test]
    fn steps_never_increase_the_mass_norm(
        seed in any::<u64>(),
        alpha in 0.05..0.95f64,
        m in 1..=8usize,
        shift in 0.05..0.95f64,
        n in 1..6usize,
    ) {
        let s = small();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_function(&s.op, &mut rng);
        let pade = PadeRational::new(m, alpha).unwrap();
        let delta = shift * s.decomp.lambda_min();
        for mesh in meshes(s.lambda_max, n) {
            let mut stepper = Stepper::new(&s.op, pade.clone(), delta, SolverPolicy::DirectBanded);
            let mut u = v.clone();
            let mut norm = m_norm(&s.op, &u).unwrap();
            for step in mesh.steps() {
                u = stepper.step(&u, step.t, step.k).unwrap();
                let next = m_norm(&s.op, &u).unwrap();
                prop_assert!(next <= norm * (1.0 + 1e-9));
                norm = next;
            }
            prop_assert!(stepper.report().max_norm_growth <= 1e-9);
            prop_assert_eq!(stepper.report().solves, m * mesh.num_steps());
        }
    }
}

#[test]
fn zero_data_stays_zero() {
    let s = small();
    for mesh in meshes(s.lambda_max, 3) {
        let out = vector_run(s, &s.op.zeros(), 0.5, 2, &mesh);
        assert!(out.coeffs().iter().all(|&v| v == 0.0));
    }
}
