//! Scalar form of the time-stepping schemes: the propagation of a single
//! eigencomponent `λ`. Each step multiplies by `r_m(θ)` with
//! `θ = k (λ - δ) / (δ + t (λ - δ))`, starting from `δ^(-α)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TimeMesh;
use crate::pade::PadeRational;

/// Which time mesh a scheme steps on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Geometrically refined mesh.
    Grm,
    /// Uniform mesh.
    Um,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Grm => "GRM",
            Scheme::Um => "UM",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grm" => Ok(Scheme::Grm),
            "um" => Ok(Scheme::Um),
            _ => Err(Error::InvalidConfig(format!("unknown scheme '{s}'"))),
        }
    }

    fn matches(self, mesh: &TimeMesh) -> bool {
        mesh.is_geometric() == (self == Scheme::Grm)
    }
}

#[derive(Debug, Clone)]
pub struct ScalarRunConfig {
    pub alpha: f64,
    pub delta: f64,
    pub pade: PadeRational,
    pub mesh: TimeMesh,
}

impl ScalarRunConfig {
    pub fn new(alpha: f64, delta: f64, m: usize, mesh: TimeMesh) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta = {delta} must be positive")));
        }
        let pade = PadeRational::new(m, alpha)?;
        Ok(Self {
            alpha,
            delta,
            pade,
            mesh,
        })
    }

    pub fn m(&self) -> usize {
        self.pade.order()
    }
}

pub fn exact_power(lambda: f64, alpha: f64) -> f64 {
    lambda.powf(-alpha)
}

/// Step argument `θ = k (λ - δ) / (δ + t (λ - δ))`.
#[inline]
pub fn theta(lambda: f64, delta: f64, t: f64, k: f64) -> f64 {
    let b = lambda - delta;
    k * b / (delta + t * b)
}

fn run(lambda: f64, cfg: &ScalarRunConfig) -> Result<f64> {
    if !(lambda >= cfg.delta) {
        return Err(Error::InvalidConfig(format!(
            "lambda = {lambda} is below delta = {}",
            cfg.delta
        )));
    }
    let mut mu = cfg.delta.powf(-cfg.alpha);
    for s in cfg.mesh.steps() {
        mu *= cfg.pade.eval(theta(lambda, cfg.delta, s.t, s.k));
    }
    Ok(mu)
}

/// `μ(λ)` on a geometric mesh.
pub fn scalar_grm(lambda: f64, cfg: &ScalarRunConfig) -> Result<f64> {
    if !cfg.mesh.is_geometric() {
        return Err(Error::InvalidConfig("GRM needs a geometric mesh".into()));
    }
    run(lambda, cfg)
}

/// `μ(λ)` on a uniform mesh.
pub fn scalar_um(lambda: f64, cfg: &ScalarRunConfig) -> Result<f64> {
    if cfg.mesh.is_geometric() {
        return Err(Error::InvalidConfig("UM needs a uniform mesh".into()));
    }
    run(lambda, cfg)
}

/// `μ(λ)` for whichever scheme the mesh belongs to.
pub fn scalar_run(lambda: f64, cfg: &ScalarRunConfig) -> Result<f64> {
    run(lambda, cfg)
}

/// `|λ^(-α) - μ(λ)|` for every `λ` in the grid.
pub fn scalar_error_sweep(
    lambda_grid: &[f64],
    cfg: &ScalarRunConfig,
    scheme: Scheme,
) -> Result<Vec<f64>> {
    if !scheme.matches(&cfg.mesh) {
        return Err(Error::InvalidConfig(format!(
            "{} sweep given a mismatched mesh",
            scheme.name()
        )));
    }
    lambda_grid
        .par_iter()
        .map(|&lambda| Ok((exact_power(lambda, cfg.alpha) - run(lambda, cfg)?).abs()))
        .collect()
}

/// `n` points from `lo` to `hi` (both included), equally spaced in `log λ`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut v: Vec<f64> = (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect();
            v[0] = lo;
            v[n - 1] = hi;
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_geometric_mesh, TimeMesh};

    fn grm(alpha: f64, m: usize, n: usize) -> ScalarRunConfig {
        let mesh = build_geometric_mesh(1e6, n, None).unwrap();
        ScalarRunConfig::new(alpha, 0.5, m, mesh).unwrap()
    }

    #[test]
    fn exact_power_examples() {
        assert_eq!(exact_power(1.0, 0.37), 1.0);
        assert_eq!(exact_power(4.0, 0.5), 0.5);
        assert!((exact_power(1000.0, 0.3) - 0.125_892_541).abs() < 1e-8);
    }

    #[test]
    fn lambda_equal_delta_is_exact() {
        let cfg = grm(0.3, 2, 4);
        assert_eq!(scalar_grm(0.5, &cfg).unwrap(), 0.5f64.powf(-0.3));
        let um = ScalarRunConfig::new(0.3, 0.5, 1, TimeMesh::uniform(9).unwrap()).unwrap();
        assert_eq!(scalar_um(0.5, &um).unwrap(), 0.5f64.powf(-0.3));
        assert_eq!(scalar_error_sweep(&[0.5], &um, Scheme::Um).unwrap(), vec![0.0]);
    }

    #[test]
    fn grm_error_quarters_when_n_doubles() {
        let e = |n| (exact_power(1000.0, 0.5) - scalar_grm(1000.0, &grm(0.5, 1, n)).unwrap()).abs();
        let ratio = e(8) / e(16);
        assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn um_single_step_closed_form() {
        let cfg = ScalarRunConfig::new(0.5, 0.5, 1, TimeMesh::uniform(1).unwrap()).unwrap();
        let mu = scalar_um(7.0, &cfg).unwrap();
        let expected = 0.5f64.powf(-0.5) * cfg.pade.eval((7.0 - 0.5) / 0.5);
        assert_eq!(mu, expected);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = grm(0.5, 1, 2);
        assert!(scalar_grm(0.25, &cfg).is_err());
        assert!(scalar_um(2.0, &cfg).is_err());
        assert!(scalar_error_sweep(&[1.0], &cfg, Scheme::Um).is_err());
        assert!(ScalarRunConfig::new(0.5, 0.0, 1, TimeMesh::uniform(2).unwrap()).is_err());
    }

    #[test]
    fn log_space_endpoints() {
        let v = log_space(1.0, 1e6, 7);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[6], 1e6);
        assert!((v[3] - 1e3).abs() < 1e-9);
    }
}
