use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracstep::{
    assemble_1d, assemble_1d_uniform, assemble_2d_tensor, build_graded_spatial_mesh, eig_1d,
    eig_2d_tensor, l2_project_case, m_norm, DataCase, DiscreteOperator, GridFunction,
};

fn random_function(op: &DiscreteOperator, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..op.num_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    op.grid_function(c).unwrap()
}

fn m_distance(op: &DiscreteOperator, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    m_norm(op, &op.grid_function(d).unwrap()).unwrap()
}

/// `K^{-1} M v` by dense LU, independent of the banded solver and the
/// eigensolver.
fn dense_inverse_apply(op: &DiscreteOperator, v: &GridFunction) -> Vec<f64> {
    let k: DMatrix<f64> = op.stiffness().to_dense();
    let mv = DVector::from_vec(op.mass().matvec(v.coeffs()));
    k.lu().solve(&mv).unwrap().iter().copied().collect()
}

#[test]
fn power_one_agrees_with_a_direct_solve() {
    let uniform = assemble_1d_uniform(300).unwrap();
    let graded = assemble_1d(&build_graded_spatial_mesh(4).unwrap()).unwrap();
    for op in [&uniform, &graded] {
        let decomp = eig_1d(op).unwrap();
        for seed in 0..3 {
            let v = random_function(op, seed);
            let spectral = decomp.reference_power(&v, 1.0).unwrap();
            let direct = dense_inverse_apply(op, &v);
            let scale = m_norm(op, &spectral).unwrap();
            assert!(m_distance(op, spectral.coeffs(), &direct) < 1e-9 * scale);
        }
    }
    let op = assemble_2d_tensor(12).unwrap();
    let decomp = eig_2d_tensor(&op).unwrap();
    let v = random_function(&op, 9);
    let spectral = decomp.reference_power(&v, 1.0).unwrap();
    let direct = dense_inverse_apply(&op, &v);
    assert!(m_distance(&op, spectral.coeffs(), &direct) < 1e-9 * m_norm(&op, &spectral).unwrap());
}

/// `A_h^{-α} v` on the uniform mesh from the closed-form eigenpairs
/// `sin(jπx_k)`, `(6/h²)(1 - cos jπh)/(2 + cos jπh)`.
fn sine_reference(op: &DiscreteOperator, v: &GridFunction, alpha: f64) -> Vec<f64> {
    let n = op.num_dofs() + 1;
    let h = 1.0 / n as f64;
    let mv = op.mass().matvec(v.coeffs());
    let mut u = vec![0.0; n - 1];
    for j in 1..n {
        let psi: Vec<f64> = (1..n).map(|k| (j as f64 * PI * k as f64 * h).sin()).collect();
        let norm: f64 = psi.iter().zip(op.mass().matvec(&psi)).map(|(a, b)| a * b).sum();
        let coeff: f64 = psi.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() / norm;
        let c = (j as f64 * PI * h).cos();
        let lambda = 6.0 / (h * h) * (1.0 - c) / (2.0 + c);
        let w = coeff * lambda.powf(-alpha);
        u.iter_mut().zip(&psi).for_each(|(ui, p)| *ui += w * p);
    }
    u
}

#[test]
fn fine_mesh_power_matches_the_closed_form_spectrum() {
    let op = assemble_1d_uniform(1000).unwrap();
    let decomp = eig_1d(&op).unwrap();
    for case in [DataCase::B, DataCase::D] {
        let f = l2_project_case(&op, case).unwrap();
        for alpha in [0.1, 0.5, 0.9] {
            let u = decomp.reference_power(&f, alpha).unwrap();
            let exact = sine_reference(&op, &f, alpha);
            let rel = m_distance(&op, u.coeffs(), &exact) / m_norm(&op, &u).unwrap();
            assert!(rel < 2e-11, "case {}, α = {alpha}: {rel:e}", case.tag());
        }
    }
}

#[test]
fn powers_compose() {
    let ops = [assemble_1d_uniform(120).unwrap(), assemble_2d_tensor(16).unwrap()];
    for op in &ops {
        let decomp = if op.dim() == 1 {
            eig_1d(op).unwrap()
        } else {
            eig_2d_tensor(op).unwrap()
        };
        for (seed, (a, b)) in [(0.3, 0.4), (0.5, -0.2), (0.9, 0.05)].into_iter().enumerate() {
            let v = random_function(op, seed as u64);
            let once = decomp.reference_power(&v, a + b).unwrap();
            let twice = decomp
                .reference_power(&decomp.reference_power(&v, a).unwrap(), b)
                .unwrap();
            let scale = m_norm(op, &once).unwrap();
            assert!(m_distance(op, once.coeffs(), twice.coeffs()) < 1e-9 * scale);
        }
    }
}

#[test]
fn eigenvector_maps_to_scaled_eigenvector() {
    let op = assemble_1d_uniform(64).unwrap();
    let decomp = eig_1d(&op).unwrap();
    let lambdas = decomp.lambdas();
    for j in [0, 17, 62] {
        let psi = op.grid_function(decomp.mode(j)).unwrap();
        let out = decomp.reference_power(&psi, 0.5).unwrap();
        let expected: Vec<f64> = psi.coeffs().iter().map(|v| v * lambdas[j].powf(-0.5)).collect();
        assert!(m_distance(&op, out.coeffs(), &expected) < 1e-10 * lambdas[j].powf(-0.5));
        let s2 = decomp.discrete_sobolev_norm(&psi, 2.0).unwrap();
        assert!((s2 - lambdas[j]).abs() < 1e-9 * lambdas[j]);
    }
}

#[test]
fn sobolev_norm_of_constant_data_grows_under_refinement() {
    let norms = |n: usize, s: f64| {
        let op = assemble_1d_uniform(n).unwrap();
        let f = l2_project_case(&op, DataCase::D).unwrap();
        eig_1d(&op).unwrap().discrete_sobolev_norm(&f, s).unwrap()
    };
    let ratio_one = norms(400, 1.0) / norms(200, 1.0);
    assert!(ratio_one > 1.1, "s = 1: {ratio_one}");
    let ratio_half = norms(400, 0.5) / norms(200, 0.5);
    assert!(ratio_half > 1.0, "s = 1/2: {ratio_half}");
    let ratio_quarter = norms(400, 0.25) / norms(200, 0.25);
    assert!(ratio_quarter < ratio_half);
    let smooth = |n: usize| {
        let op = assemble_1d_uniform(n).unwrap();
        let f = l2_project_case(&op, DataCase::B).unwrap();
        eig_1d(&op).unwrap().discrete_sobolev_norm(&f, 1.0).unwrap()
    };
    assert!((smooth(400) / smooth(200) - 1.0).abs() < 1e-3);
}

#[test]
fn modes_span_the_space() {
    let op = assemble_2d_tensor(10).unwrap();
    let decomp = eig_2d_tensor(&op).unwrap();
    assert_eq!(decomp.num_modes(), 81);
    let v = random_function(&op, 4);
    let back = decomp.synthesize(&decomp.coefficients(&v).unwrap());
    assert!(m_distance(&op, v.coeffs(), &back) < 1e-12 * m_norm(&op, &v).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parseval(seed in any::<u64>(), n in 8..60usize) {
        let op = assemble_1d_uniform(n).unwrap();
        let decomp = eig_1d(&op).unwrap();
        let v = random_function(&op, seed);
        let c = decomp.coefficients(&v).unwrap();
        let energy: f64 = c.iter().map(|x| x * x).sum();
        let norm2 = m_norm(&op, &v).unwrap().powi(2);
        prop_assert!((energy - norm2).abs() <= 1e-10 * norm2);
        prop_assert!((decomp.discrete_sobolev_norm(&v, 0.0).unwrap().powi(2) - norm2).abs() <= 1e-10 * norm2);
    }

    #[test]
    fn power_zero_is_the_identity(seed in any::<u64>()) {
        let op = assemble_1d_uniform(30).unwrap();
        let decomp = eig_1d(&op).unwrap();
        let v = random_function(&op, seed);
        let out = decomp.reference_power(&v, 0.0).unwrap();
        prop_assert!(m_distance(&op, v.coeffs(), out.coeffs()) <= 1e-12 * m_norm(&op, &v).unwrap());
    }
}
