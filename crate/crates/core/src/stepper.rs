//! Time stepping for `A_h^(-α) v` on a discrete operator.
//!
//! With `B = A_h - δI` and `S_t = δI + tB`, one step applies
//! `r_m(k B S_t^(-1))` through the partial-fraction form of `r_m`. For a pole
//! `x_i` the resolvent term is `S_t (kB - x_i S_t)^(-1) u`; in matrix form
//! this is the SPD solve
//!
//! ```text
//! G_i z = M u,   G_i = a_i K + b_i M,   a_i = k - x_i t,   b_i = -δ (k + x_i (1 - t))
//! ```
//!
//! followed by `S_t z = (δ k z + t u) / a_i`, which needs no further solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{DiscreteOperator, GridFunction};
use crate::linalg::{dot, pcg, BandCholesky, CsrMatrix, SolverPolicy};
use crate::mesh::TimeMesh;
use crate::pade::PadeRational;

pub use crate::linalg::solve_spd;

const BOUNDS_MAX_ITER: usize = 10_000;
const BOUNDS_REL_CHANGE: f64 = 1e-8;
const BOUNDS_SEED: u64 = 0x5eed_b0b5;
const MAX_INFLATION: f64 = 1.01;
const MIN_DEFLATION: f64 = 0.99;

#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub alpha: f64,
    pub m: usize,
    pub delta: f64,
    pub mesh: TimeMesh,
    pub solver: SolverPolicy,
}

impl StepperConfig {
    fn pade(&self) -> Result<PadeRational> {
        if !(self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "delta = {} must be positive",
                self.delta
            )));
        }
        PadeRational::new(self.m, self.alpha)
    }
}

/// Estimated extremes of the spectrum of `A_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub lambda_min_est: f64,
    pub lambda_max_est: f64,
    /// Both iterations converged and their residual enclosures fit inside the safety margins.
    pub certified: bool,
}

impl SpectralBounds {
    /// The default shift `δ = λ_min_est / 2`.
    pub fn default_delta(&self) -> f64 {
        0.5 * self.lambda_min_est
    }
}

struct Eigenpair {
    value: f64,
    /// `||K x - ρ M x||_{M^-1} / ||x||_M`, the radius of an interval holding an eigenvalue.
    radius: f64,
}

fn random_start(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(BOUNDS_SEED);
    (0..n).map(|_| rng.gen_range(0.5..1.5)).collect()
}

fn rayleigh_iteration(
    op: &DiscreteOperator,
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    method: &'static str,
) -> Result<Eigenpair> {
    let (k, m) = (op.stiffness(), op.mass());
    let mut x = random_start(op.num_dofs());
    let mut prev = f64::NAN;
    for iteration in 1..=BOUNDS_MAX_ITER {
        x = apply(&x)?;
        let mx = m.matvec(&x);
        let norm = dot(&x, &mx).sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
        let kx = k.matvec(&x);
        let rho = dot(&x, &kx);
        let change = ((rho - prev) / rho).abs();
        prev = rho;
        if change < BOUNDS_REL_CHANGE {
            let r: Vec<f64> = kx
                .iter()
                .zip(&mx)
                .map(|(a, b)| a - rho * b / norm)
                .collect();
            let radius = dot(&r, &op.solve_mass(&r)?).sqrt();
            return Ok(Eigenpair { value: rho, radius });
        }
        if iteration == BOUNDS_MAX_ITER {
            return Err(Error::NotConverged {
                method,
                iterations: iteration,
                residual: change,
            });
        }
    }
    unreachable!()
}

/// Largest generalized eigenvalue over single elements, an upper bound for `λ_max`.
fn element_upper_bound(op: &DiscreteOperator) -> f64 {
    let w = op
        .nodes()
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(f64::INFINITY, f64::min);
    12.0 * op.dim() as f64 / (w * w)
}

/// Power iteration on `M^{-1}K` for `λ_max` and inverse iteration for `λ_min`.
pub fn estimate_spectral_bounds(op: &DiscreteOperator) -> Result<SpectralBounds> {
    let k = op.stiffness();
    let top = rayleigh_iteration(
        op,
        |x| op.solve_mass(&k.matvec(x)),
        "power iteration",
    )?;
    let chol = BandCholesky::factor(&k.to_band())?;
    let bottom = rayleigh_iteration(
        op,
        |x| Ok(chol.solve(&op.mass().matvec(x))),
        "inverse iteration",
    )?;
    let lambda_max_est = MAX_INFLATION * top.value;
    let lambda_min_est = MIN_DEFLATION * bottom.value;
    let max_ok = lambda_max_est >= element_upper_bound(op)
        || top.radius <= (MAX_INFLATION - 1.0) * top.value;
    let min_ok = bottom.radius <= (1.0 - MIN_DEFLATION) * bottom.value;
    Ok(SpectralBounds {
        lambda_min_est,
        lambda_max_est,
        certified: max_ok && min_ok,
    })
}

/// Counters collected while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunReport {
    pub steps: usize,
    /// One per pole per step.
    pub solves: usize,
    /// Largest `||U_new||_M / ||U_old||_M - 1` over all steps.
    pub max_norm_growth: f64,
    pub max_cg_iterations: usize,
}

/// Applies successive Padé steps to one iterate, keeping warm starts for the
/// iterative solver and the bookkeeping of a [`RunReport`].
pub struct Stepper<'a> {
    op: &'a DiscreteOperator,
    pade: PadeRational,
    delta: f64,
    solver: SolverPolicy,
    guesses: Vec<Option<Vec<f64>>>,
    report: RunReport,
}

impl<'a> Stepper<'a> {
    pub fn new(op: &'a DiscreteOperator, pade: PadeRational, delta: f64, solver: SolverPolicy) -> Self {
        let m = pade.order();
        Self {
            op,
            pade,
            delta,
            solver,
            guesses: vec![None; m],
            report: RunReport::default(),
        }
    }

    pub fn report(&self) -> RunReport {
        self.report
    }

    fn solve(&self, g: &CsrMatrix, rhs: &[f64], guess: Option<&[f64]>) -> Result<(Vec<f64>, usize)> {
        match self.solver {
            SolverPolicy::DirectBanded => Ok((BandCholesky::factor(&g.to_band())?.solve(rhs), 0)),
            SolverPolicy::Iterative { rel_tol, max_iter } => {
                let mut x = guess.map_or_else(|| vec![0.0; rhs.len()], <[f64]>::to_vec);
                let rep = pcg(g, rhs, &mut x, rel_tol, max_iter)?;
                Ok((x, rep.iterations))
            }
        }
    }

    /// `r_m(k B S_t^{-1}) u`.
    pub fn step(&mut self, u: &GridFunction, t: f64, k: f64) -> Result<GridFunction> {
        self.op.check(u)?;
        if !(t >= 0.0 && t < 1.0 && k >= 0.0 && t + k <= 1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "step (t = {t}, k = {k}) leaves [0, 1]"
            )));
        }
        if k == 0.0 {
            return Ok(u.clone());
        }
        let (kmat, mmat) = (self.op.stiffness(), self.op.mass());
        let uc = u.coeffs();
        let mu = mmat.matvec(uc);
        let delta = self.delta;
        let (c_inf, poles, residues) = self.pade.partial_fractions();

        let solved: Vec<Result<(Vec<f64>, usize)>> = {
            let this = &*self;
            poles
                .par_iter()
                .zip(this.guesses.par_iter())
                .map(|(&x, guess)| {
                    let a = k - x * t;
                    let b = -delta * (k + x * (1.0 - t));
                    let g = kmat.combine(a, mmat, b);
                    this.solve(&g, &mu, guess.as_deref())
                })
                .collect()
        };

        let mut w: Vec<f64> = uc.iter().map(|v| c_inf * v).collect();
        for (i, res) in solved.into_iter().enumerate() {
            let (z, iterations) = res?;
            let a = k - poles[i] * t;
            let (cz, cu) = (residues[i] * delta * k / a, residues[i] * t / a);
            for ((wj, zj), uj) in w.iter_mut().zip(&z).zip(uc) {
                *wj += cz * zj + cu * uj;
            }
            self.report.max_cg_iterations = self.report.max_cg_iterations.max(iterations);
            self.guesses[i] = Some(z);
        }

        let before = dot(uc, &mu);
        if before > 0.0 {
            let after = dot(&w, &mmat.matvec(&w));
            let growth = (after / before).sqrt() - 1.0;
            self.report.max_norm_growth = self.report.max_norm_growth.max(growth);
        }
        self.report.steps += 1;
        self.report.solves += poles.len();
        self.op.grid_function(w)
    }

    /// Runs every step of `mesh` starting from `U_0 = δ^(-α) v`.
    pub fn run(&mut self, v: &GridFunction, mesh: &TimeMesh) -> Result<GridFunction> {
        let mut u = v.scaled(self.delta.powf(-self.pade.alpha()));
        for s in mesh.steps() {
            u = self.step(&u, s.t, s.k)?;
        }
        Ok(u)
    }
}

/// One Padé step `r(k B (δI + tB)^{-1}) u`.
pub fn apply_pade_step(
    u: &GridFunction,
    t: f64,
    k: f64,
    r: &PadeRational,
    op: &DiscreteOperator,
    cfg: &StepperConfig,
) -> Result<GridFunction> {
    Stepper::new(op, r.clone(), cfg.delta, cfg.solver).step(u, t, k)
}

/// Runs the scheme matching `cfg.mesh` and returns the iterate at `t = 1`
/// together with the run counters.
pub fn run_scheme(
    v: &GridFunction,
    op: &DiscreteOperator,
    cfg: &StepperConfig,
) -> Result<(GridFunction, RunReport)> {
    let mut stepper = Stepper::new(op, cfg.pade()?, cfg.delta, cfg.solver);
    let u = stepper.run(v, &cfg.mesh)?;
    Ok((u, stepper.report()))
}

/// Geometrically refined scheme.
pub fn run_grm(v: &GridFunction, op: &DiscreteOperator, cfg: &StepperConfig) -> Result<GridFunction> {
    if !cfg.mesh.is_geometric() {
        return Err(Error::InvalidConfig("GRM needs a geometric mesh".into()));
    }
    Ok(run_scheme(v, op, cfg)?.0)
}

/// Uniform scheme.
pub fn run_um(v: &GridFunction, op: &DiscreteOperator, cfg: &StepperConfig) -> Result<GridFunction> {
    if cfg.mesh.is_geometric() {
        return Err(Error::InvalidConfig("UM needs a uniform mesh".into()));
    }
    Ok(run_scheme(v, op, cfg)?.0)
}
