//! Diagonal Padé approximants of `(1 + x)^(-alpha)`.
//!
//! `r_m = P_m / Q_m` with both polynomials of degree `m`, normalised so that
//! `P_m(0) = Q_m(0) = 1`. The coefficients are the truncated hypergeometric
//! series
//!
//! ```text
//! Q_m(x) = 1 + sum_j a_j b_j( alpha) x^j
//! P_m(x) = 1 + sum_j a_j b_j(-alpha) x^j
//! a_j    = m (m-1) ... (m+1-j) / (j! * 2m (2m-1) ... (2m+1-j))
//! b_j(a) = (m+a) (m-1+a) ... (m+1-j+a)
//! ```
//!
//! All roots of `Q_m` are real, simple and lie in `(-inf, -1)`, so `r_m` has the
//! partial-fraction form `r_m(x) = c_inf + sum_i w_i / (x - x_i)` used by the
//! operator stepper to apply one step as `m` independent shifted solves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest supported Padé order.
pub const MAX_ORDER: usize = 8;

const POLE_CLUSTER_TOL: f64 = 1e-8;
const ROOT_RESIDUAL_TOL: f64 = 1e-12;
const RHO_GRID_POINTS: usize = 4000;
const RHO_GRID_MAX: f64 = 1e8;
/// Below this argument the approximation error is summed from its Maclaurin tail.
const TAIL_SERIES_CUTOFF: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PadeRational {
    m: usize,
    alpha: f64,
    p_coeffs: Vec<f64>,
    q_coeffs: Vec<f64>,
    poles: Vec<f64>,
    residues: Vec<f64>,
    limit_at_infinity: f64,
    rho_m: f64,
}

/// Builds `r_m` for `(1 + x)^(-alpha)`.
pub fn pade_coefficients(m: usize, alpha: f64) -> Result<PadeRational> {
    PadeRational::new(m, alpha)
}

impl PadeRational {
    pub fn new(m: usize, alpha: f64) -> Result<Self> {
        if m == 0 || m > MAX_ORDER {
            return Err(Error::UnsupportedOrder(m));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }

        let q_coeffs = series_coefficients(m, alpha);
        let p_coeffs = series_coefficients(m, -alpha);
        let poles = real_roots(&q_coeffs)?;
        check_separation(&poles)?;

        let residues = poles
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let q_prime = poles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .fold(q_coeffs[m], |acc, (_, &y)| acc * (x - y));
                compensated_horner(&p_coeffs, x) / q_prime
            })
            .collect();
        let limit_at_infinity = p_coeffs[m] / q_coeffs[m];

        let mut r = Self {
            m,
            alpha,
            p_coeffs,
            q_coeffs,
            poles,
            residues,
            limit_at_infinity,
            rho_m: 0.0,
        };
        r.rho_m = r.scan_minimum();
        Ok(r)
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Numerator coefficients, ascending powers.
    pub fn p_coeffs(&self) -> &[f64] {
        &self.p_coeffs
    }

    /// Denominator coefficients, ascending powers.
    pub fn q_coeffs(&self) -> &[f64] {
        &self.q_coeffs
    }

    /// Roots of `Q_m`, ascending.
    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    pub fn residues(&self) -> &[f64] {
        &self.residues
    }

    pub fn limit_at_infinity(&self) -> f64 {
        self.limit_at_infinity
    }

    /// Lower bound of `r_m` on `[0, inf)`.
    pub fn rho_m(&self) -> f64 {
        self.rho_m
    }

    /// `P_m(x) / Q_m(x)` by Horner evaluation. Valid for `x >= -1`.
    pub fn eval(&self, x: f64) -> f64 {
        if x.is_infinite() && x > 0.0 {
            return self.limit_at_infinity;
        }
        horner(&self.p_coeffs, x) / horner(&self.q_coeffs, x)
    }

    pub fn eval_p(&self, x: f64) -> f64 {
        horner(&self.p_coeffs, x)
    }

    pub fn eval_q(&self, x: f64) -> f64 {
        horner(&self.q_coeffs, x)
    }

    /// `c_inf + sum_i w_i / (x - x_i)`.
    pub fn eval_partial_fractions(&self, x: f64) -> f64 {
        self.poles
            .iter()
            .zip(&self.residues)
            .fold(self.limit_at_infinity, |acc, (&pole, &w)| acc + w / (x - pole))
    }

    /// `(limit_at_infinity, poles, residues)`.
    pub fn partial_fractions(&self) -> (f64, &[f64], &[f64]) {
        (self.limit_at_infinity, &self.poles, &self.residues)
    }

    /// `(1 + x)^(-alpha) - r_m(x)` for `x >= 0`, evaluated without the
    /// cancellation that a direct difference suffers near `x = 0`.
    ///
    /// For small `x` the numerator `(1 + x)^(-alpha) Q_m(x) - P_m(x)` is summed
    /// from its Maclaurin coefficients of order `2m + 1` and higher.
    pub fn approximation_error(&self, x: f64) -> f64 {
        if x >= TAIL_SERIES_CUTOFF {
            return (1.0 + x).powf(-self.alpha) - self.eval(x);
        }
        if x == 0.0 {
            return 0.0;
        }
        let n0 = 2 * self.m + 1;
        // Binomial coefficients of (1 + x)^(-alpha), kept in a sliding window of width m + 1.
        let mut binom = vec![0.0; n0 + 1];
        binom[0] = 1.0;
        for k in 1..=n0 {
            binom[k] = binom[k - 1] * (-self.alpha - (k as f64 - 1.0)) / k as f64;
        }
        let mut window: Vec<f64> = binom[n0 - self.m..=n0].to_vec();
        let mut sum = 0.0;
        let mut power = x.powi(n0 as i32);
        let mut n = n0;
        loop {
            // window[i] holds the binomial coefficient of index n - m + i.
            let c_n: f64 = (0..=self.m)
                .map(|j| self.q_coeffs[j] * window[self.m - j])
                .sum();
            let term = c_n * power;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || n > n0 + 600 {
                break;
            }
            n += 1;
            power *= x;
            let next = window[self.m] * (-self.alpha - (n as f64 - 1.0)) / n as f64;
            window.rotate_left(1);
            window[self.m] = next;
        }
        sum / self.eval_q(x)
    }

    /// The constant `c_{m,s} = max(Q_m(-1) 2^(s-2m), 2^(1+s))`.
    pub fn error_bound_constant(&self, s: f64) -> f64 {
        let q_at_minus_one = self.eval_q(-1.0);
        (q_at_minus_one * 2f64.powf(s - 2.0 * self.m as f64)).max(2f64.powf(1.0 + s))
    }

    fn scan_minimum(&self) -> f64 {
        let log_max = RHO_GRID_MAX.log10();
        let log_min = -6.0;
        (0..RHO_GRID_POINTS)
            .map(|i| {
                let t = i as f64 / (RHO_GRID_POINTS - 1) as f64;
                10f64.powf(log_min + t * (log_max - log_min))
            })
            .map(|x| self.eval(x))
            .fold(self.limit_at_infinity.min(1.0), f64::min)
    }
}

/// Checks `|(1 + x)^(-alpha) - r_m(x)| <= c_{m,s} x^s` at every grid point.
pub fn pade_error_bound_check(r: &PadeRational, s: f64, x_grid: &[f64]) -> bool {
    let c = r.error_bound_constant(s);
    x_grid.iter().all(|&x| {
        let err = r.approximation_error(x).abs();
        err <= c * x.powf(s)
    })
}

/// Coefficients `1, a_1 b_1(a), ..., a_m b_m(a)` in ascending order.
fn series_coefficients(m: usize, a: f64) -> Vec<f64> {
    let mf = m as f64;
    let mut coeffs = Vec::with_capacity(m + 1);
    coeffs.push(1.0);
    let mut c = 1.0;
    for j in 1..=m {
        let jf = j as f64;
        c *= (mf + 1.0 - jf) * (mf + 1.0 - jf + a) / (jf * (2.0 * mf + 1.0 - jf));
        coeffs.push(c);
    }
    coeffs
}

pub(crate) fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn horner_derivative(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (j, &c)| acc * x + j as f64 * c)
}

/// Horner evaluation with error-free transformations, accurate to about
/// twice the working precision.
fn compensated_horner(coeffs: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &a in coeffs.iter().rev() {
        let p = s * x;
        let p_err = s.mul_add(x, -p);
        let t = p + a;
        let z = t - p;
        let t_err = (p - (t - z)) + (a - z);
        s = t;
        c = c * x + (p_err + t_err);
    }
    s + c
}

fn abs_term_sum(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x.abs() + c.abs())
}

/// Real roots of a polynomial with ascending coefficients: companion-matrix
/// eigenvalues followed by Newton polishing.
fn real_roots(coeffs: &[f64]) -> Result<Vec<f64>> {
    let degree = coeffs.len() - 1;
    let lead = coeffs[degree];
    let mut companion = DMatrix::<f64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -coeffs[i] / lead;
    }

    let eigenvalues = companion.complex_eigenvalues();
    let mut roots = Vec::with_capacity(degree);
    for z in eigenvalues.iter() {
        if z.im.abs() > 1e-6 * z.re.abs().max(1.0) {
            return Err(Error::RootFinding(format!(
                "denominator has a complex root {} + {}i",
                z.re, z.im
            )));
        }
        let mut x = z.re;
        let mut best = compensated_horner(coeffs, x).abs();
        for _ in 0..8 {
            let step = compensated_horner(coeffs, x) / horner_derivative(coeffs, x);
            let candidate = x - step;
            let value = compensated_horner(coeffs, candidate).abs();
            if value < best {
                x = candidate;
                best = value;
            } else {
                break;
            }
        }
        let scale = abs_term_sum(coeffs, x);
        if best > ROOT_RESIDUAL_TOL * scale {
            return Err(Error::RootFinding(format!(
                "residual {best:.3e} at root {x} exceeds tolerance"
            )));
        }
        roots.push(x);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(roots)
}

fn check_separation(poles: &[f64]) -> Result<()> {
    for pair in poles.windows(2) {
        let gap = (pair[1] - pair[0]).abs() / pair[0].abs().max(pair[1].abs());
        if gap < POLE_CLUSTER_TOL {
            return Err(Error::IllConditionedPoles { gap });
        }
    }
    Ok(())
}
