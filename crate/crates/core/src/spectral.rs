//! Exact discrete reference via the generalized eigenproblem `K ψ = λ M ψ`.
//!
//! The dense decomposition reduces to standard symmetric problems with the
//! Cholesky factors of `M` and `K`; the tensor form reuses the 1D factor's eigenpairs
//! (`λ_a + λ_b`, `ψ_b ⊗ ψ_a`) and never materialises the 2D modes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::{DiscreteOperator, GridFunction, OperatorId};
use crate::linalg::{norm2, BandCholesky, CsrMatrix};

/// Largest dof count accepted by the dense eigensolve.
pub const DENSE_DOF_CAP: usize = 4000;
const BACKWARD_ERROR_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    operator: OperatorId,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Dense {
        lambdas: Vec<f64>,
        /// M-orthonormal eigenvectors as columns.
        modes: DMatrix<f64>,
        mass: CsrMatrix,
    },
    /// Mode `(a, b)` is stored at index `b * n + a`, matching the dof layout.
    Tensor {
        n: usize,
        lambdas_1d: Vec<f64>,
        modes_1d: DMatrix<f64>,
        mass_1d: DMatrix<f64>,
    },
}

/// Dense generalized eigendecomposition of `(K, M)`.
pub fn eig_1d(op: &DiscreteOperator) -> Result<SpectralDecomposition> {
    let n = op.num_dofs();
    if n > DENSE_DOF_CAP {
        return Err(Error::Eigen(format!(
            "{n} dofs exceed the dense eigensolver cap of {DENSE_DOF_CAP}"
        )));
    }
    let (lambdas, modes) = dense_generalized_eigen(op.stiffness(), op.mass())?;
    let decomp = SpectralDecomposition {
        operator: op.id(),
        kind: Kind::Dense {
            lambdas,
            modes,
            mass: op.mass().clone(),
        },
    };
    let worst = decomp.max_backward_error(op);
    if !(worst < BACKWARD_ERROR_TOL) {
        return Err(Error::Eigen(format!(
            "eigenpair backward error {worst:.3e} exceeds {BACKWARD_ERROR_TOL:.0e}"
        )));
    }
    Ok(decomp)
}

/// Tensor-product decomposition of an operator built by `assemble_2d_tensor`.
pub fn eig_2d_tensor(op: &DiscreteOperator) -> Result<SpectralDecomposition> {
    let factor = op
        .tensor_factor()
        .ok_or_else(|| Error::Eigen("operator has no tensor-product structure".into()))?;
    let one = eig_1d(factor)?;
    let Kind::Dense { lambdas, modes, .. } = one.kind else {
        unreachable!("eig_1d always yields a dense decomposition")
    };
    Ok(SpectralDecomposition {
        operator: op.id(),
        kind: Kind::Tensor {
            n: factor.num_dofs(),
            lambdas_1d: lambdas,
            modes_1d: modes,
            mass_1d: factor.mass().to_dense(),
        },
    })
}

/// Eigenpairs of `(K, M)` sorted by `λ`, with `M`-orthonormal vectors.
///
/// Reducing with the Cholesky factor of `M` gives eigenvalues with absolute
/// error about `ε λ_max`, accurate for the top of the spectrum; reducing the
/// inverse pencil `M y = (1/λ) K y` with the factor of `K` gives relative
/// error about `ε λ / λ_min`, accurate for the bottom. Modes below a spectral
/// gap near `sqrt(λ_min λ_max)` come from the second reduction, the rest from
/// the first.
fn dense_generalized_eigen(k: &CsrMatrix, m: &CsrMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.dim();
    let (high_l, high_v) = reduced_eigen(m, k)?;
    let (inv_mu, inv_v) = reduced_eigen(k, m)?;
    if let Some(mu) = inv_mu.iter().find(|&&mu| !(mu > 0.0)) {
        return Err(Error::Eigen(format!("non-positive inverse eigenvalue {mu:e}")));
    }

    // Inverse pencil: descending μ is ascending λ; K-normalised columns have M-norm sqrt(μ).
    let low_l: Vec<f64> = inv_mu.iter().rev().map(|mu| 1.0 / mu).collect();
    let split = split_index(&high_l);
    let mut lambdas = Vec::with_capacity(n);
    let mut modes = DMatrix::zeros(n, n);
    for j in 0..n {
        if j < split {
            let src = n - 1 - j;
            lambdas.push(low_l[j]);
            modes.set_column(j, &(inv_v.column(src) * low_l[j].sqrt()));
        } else {
            lambdas.push(high_l[j]);
            modes.set_column(j, &high_v.column(j));
        }
    }
    Ok((lambdas, modes))
}

/// Index of the widest relative gap among eigenvalues within a decade of the
/// geometric mean of the extremes.
fn split_index(lambdas: &[f64]) -> usize {
    let n = lambdas.len();
    if n < 2 || !(lambdas[0] > 0.0) {
        return 0;
    }
    let centre = (lambdas[0] * lambdas[n - 1]).sqrt();
    (1..n)
        .filter(|&j| lambdas[j - 1] >= 0.1 * centre && lambdas[j] <= 10.0 * centre)
        .max_by(|&a, &b| {
            let gap = |j: usize| lambdas[j] / lambdas[j - 1];
            gap(a).total_cmp(&gap(b))
        })
        .unwrap_or_else(|| lambdas.partition_point(|&l| l < centre))
}

/// Eigenpairs of `B y = θ A y` in ascending `θ`, columns `A`-orthonormal,
/// using `D = diag(A)^(-1/2)` and `D A D = L L^T`.
fn reduced_eigen(a: &CsrMatrix, b: &CsrMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.dim();
    let d: Vec<f64> = a.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
    let scale = |x: &CsrMatrix| {
        let t: Vec<_> = x.triplets().into_iter().map(|(i, j, v)| (i, j, d[i] * v * d[j])).collect();
        CsrMatrix::from_triplets(n, &t)
    };
    let chol = BandCholesky::factor(&scale(a).to_band())?;

    let mut x = scale(b).to_dense();
    for mut col in x.column_iter_mut() {
        chol.forward_in_place(col.as_mut_slice());
    }
    let mut c = x.transpose();
    for mut col in c.column_iter_mut() {
        chol.forward_in_place(col.as_mut_slice());
    }
    let c = (&c + c.transpose()) * 0.5;

    let eigen = SymmetricEigen::try_new(c, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigen.eigenvalues[i].total_cmp(&eigen.eigenvalues[j]));
    let values = order.iter().map(|&i| eigen.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eigen.eigenvectors.column(src).clone_owned();
        chol.backward_in_place(col.as_mut_slice());
        for (v, di) in col.iter_mut().zip(&d) {
            *v *= di;
        }
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

impl SpectralDecomposition {
    pub fn operator_id(&self) -> OperatorId {
        self.operator
    }

    pub fn num_modes(&self) -> usize {
        match &self.kind {
            Kind::Dense { lambdas, .. } => lambdas.len(),
            Kind::Tensor { n, .. } => n * n,
        }
    }

    pub fn is_tensor(&self) -> bool {
        matches!(self.kind, Kind::Tensor { .. })
    }

    /// Eigenvalues in mode order: ascending for the dense form, `(a, b)`
    /// layout for the tensor form.
    pub fn lambdas(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Dense { lambdas, .. } => lambdas.clone(),
            Kind::Tensor { n, lambdas_1d, .. } => (0..n * n)
                .map(|i| lambdas_1d[i % n] + lambdas_1d[i / n])
                .collect(),
        }
    }

    pub fn sorted_lambdas(&self) -> Vec<f64> {
        let mut l = self.lambdas();
        l.sort_by(f64::total_cmp);
        l
    }

    pub fn lambda_min(&self) -> f64 {
        match &self.kind {
            Kind::Dense { lambdas, .. } => lambdas[0],
            Kind::Tensor { lambdas_1d, .. } => 2.0 * lambdas_1d[0],
        }
    }

    pub fn lambda_max(&self) -> f64 {
        match &self.kind {
            Kind::Dense { lambdas, .. } => *lambdas.last().unwrap(),
            Kind::Tensor { lambdas_1d, .. } => 2.0 * lambdas_1d.last().unwrap(),
        }
    }

    /// Eigenvector of mode `j` in dof coordinates.
    pub fn mode(&self, j: usize) -> Vec<f64> {
        match &self.kind {
            Kind::Dense { modes, .. } => modes.column(j).iter().copied().collect(),
            Kind::Tensor { n, modes_1d, .. } => {
                let (a, b) = (j % n, j / n);
                let mut v = Vec::with_capacity(n * n);
                for iy in 0..*n {
                    for ix in 0..*n {
                        v.push(modes_1d[(iy, b)] * modes_1d[(ix, a)]);
                    }
                }
                v
            }
        }
    }

    fn check(&self, v: &GridFunction) -> Result<()> {
        if v.operator_id() != self.operator {
            return Err(Error::OperatorMismatch);
        }
        Ok(())
    }

    /// `(v, ψ_j)_M` for every mode.
    pub fn coefficients(&self, v: &GridFunction) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(self.coefficients_raw(v.coeffs()))
    }

    fn coefficients_raw(&self, v: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Dense { modes, mass, .. } => {
                let mv = nalgebra::DVector::from_vec(mass.matvec(v));
                (modes.transpose() * mv).iter().copied().collect()
            }
            Kind::Tensor {
                n,
                modes_1d,
                mass_1d,
                ..
            } => {
                // row index iy, column index ix
                let vm = DMatrix::from_row_slice(*n, *n, v);
                let w = mass_1d * vm * mass_1d;
                let c = modes_1d.transpose() * w * modes_1d;
                row_major(&c)
            }
        }
    }

    /// `Σ_j c_j ψ_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Dense { modes, .. } => {
                let c = nalgebra::DVector::from_column_slice(coeffs);
                (modes * c).iter().copied().collect()
            }
            Kind::Tensor { n, modes_1d, .. } => {
                let c = DMatrix::from_row_slice(*n, *n, coeffs);
                let v = modes_1d * c * modes_1d.transpose();
                row_major(&v)
            }
        }
    }

    /// `Σ_j g(λ_j) (v, ψ_j)_M ψ_j`.
    pub fn apply_function(&self, v: &GridFunction, g: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
        let mut c = self.coefficients(v)?;
        for (cj, lambda) in c.iter_mut().zip(self.lambdas()) {
            *cj *= g(lambda);
        }
        Ok(self.synthesize(&c))
    }

    /// `A_h^{-alpha} v`.
    pub fn reference_power(&self, v: &GridFunction, alpha: f64) -> Result<GridFunction> {
        let coeffs = self.apply_function(v, |lambda| lambda.powf(-alpha))?;
        Ok(GridFunction::from_parts(coeffs, v.operator_id()))
    }

    /// `(Σ_j λ_j^s (v, ψ_j)_M^2)^{1/2} = ||A_h^{s/2} v||`.
    pub fn discrete_sobolev_norm(&self, v: &GridFunction, s: f64) -> Result<f64> {
        let c = self.coefficients(v)?;
        Ok(c.iter()
            .zip(self.lambdas())
            .map(|(cj, lambda)| lambda.powf(s) * cj * cj)
            .sum::<f64>()
            .sqrt())
    }

    fn residuals(&self, op: &DiscreteOperator, measure: impl Fn(f64, &[f64], &[f64], &[f64]) -> f64) -> f64 {
        let lambdas = self.lambdas();
        (0..self.num_modes())
            .map(|j| {
                let psi = self.mode(j);
                let kpsi = op.stiffness().matvec(&psi);
                let mpsi = op.mass().matvec(&psi);
                let r: Vec<f64> = kpsi
                    .iter()
                    .zip(&mpsi)
                    .map(|(a, b)| a - lambdas[j] * b)
                    .collect();
                measure(lambdas[j], &psi, &kpsi, &r)
            })
            .fold(0.0, f64::max)
    }

    /// Largest `||K ψ - λ M ψ|| / ||K ψ||` over all modes.
    pub fn max_residual(&self, op: &DiscreteOperator) -> f64 {
        self.residuals(op, |_, _, kpsi, r| norm2(r) / norm2(kpsi))
    }

    /// Largest normwise backward error of the diagonally scaled pencil
    /// `(DKD, DMD)`, `D = diag(M)^(-1/2)`:
    /// `||D r|| / ((||DKD|| + λ ||DMD||) ||D^(-1) ψ||)` with `r = K ψ - λ M ψ`.
    pub fn max_backward_error(&self, op: &DiscreteOperator) -> f64 {
        let d: Vec<f64> = op.mass().diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
        let scaled_norm = |a: &CsrMatrix| {
            (0..a.dim())
                .map(|i| a.row(i).map(|(j, v)| (d[i] * v * d[j]).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let (nk, nm) = (scaled_norm(op.stiffness()), scaled_norm(op.mass()));
        self.residuals(op, |lambda, psi, _, r| {
            let dr: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a * b).collect();
            let y: Vec<f64> = psi.iter().zip(&d).map(|(a, b)| a / b).collect();
            norm2(&dr) / ((nk + lambda.abs() * nm) * norm2(&y))
        })
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

/// Free-function form of [`SpectralDecomposition::reference_power`].
pub fn reference_power(
    decomp: &SpectralDecomposition,
    v: &GridFunction,
    alpha: f64,
) -> Result<GridFunction> {
    decomp.reference_power(v, alpha)
}

/// Free-function form of [`SpectralDecomposition::discrete_sobolev_norm`].
pub fn discrete_sobolev_norm(decomp: &SpectralDecomposition, v: &GridFunction, s: f64) -> Result<f64> {
    decomp.discrete_sobolev_norm(v, s)
}
