//! Piecewise-linear (1D) and bilinear tensor-product (2D) finite elements for
//! `-Δu` with homogeneous Dirichlet conditions, plus L²-projection of the
//! model data.
//!
//! Degrees of freedom are the interior nodes. In 2D the dof of node
//! `(ix, iy)` is `iy * n + ix`, with `n` interior nodes per side.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{norm2, BandCholesky, CsrMatrix};

static NEXT_OPERATOR_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorId(u64);

impl OperatorId {
    fn fresh() -> Self {
        OperatorId(NEXT_OPERATOR_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Mass/stiffness pair defining `A_h = M^{-1} K` on the interior dofs.
#[derive(Debug)]
pub struct DiscreteOperator {
    id: OperatorId,
    dim: usize,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    /// 1D node coordinates including both boundary nodes; the per-axis nodes in 2D.
    nodes: Vec<f64>,
    /// 1D factor of a tensor-product operator.
    factor: Option<Box<DiscreteOperator>>,
    mass_factor: OnceLock<BandCholesky>,
}

/// Coefficient vector in the nodal basis of a particular operator.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    coeffs: Vec<f64>,
    operator: OperatorId,
}

impl GridFunction {
    pub(crate) fn from_parts(coeffs: Vec<f64>, operator: OperatorId) -> Self {
        Self { coeffs, operator }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn operator_id(&self) -> OperatorId {
        self.operator
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
            operator: self.operator,
        }
    }

    /// `self - other`, both on the same operator.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.operator != other.operator {
            return Err(Error::OperatorMismatch);
        }
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
            operator: self.operator,
        })
    }

    /// `a * self + b * other`.
    pub fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.operator != other.operator {
            return Err(Error::OperatorMismatch);
        }
        Ok(Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            operator: self.operator,
        })
    }
}

impl DiscreteOperator {
    pub fn id(&self) -> OperatorId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_dofs(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Node coordinates (per axis in 2D), boundary nodes included.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn tensor_factor(&self) -> Option<&DiscreteOperator> {
        self.factor.as_deref()
    }

    pub fn bandwidth(&self) -> usize {
        self.mass.bandwidth().max(self.stiffness.bandwidth())
    }

    /// Coordinates of dof `i`; the second entry is zero in 1D.
    pub fn dof_coord(&self, i: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.nodes[i + 1], 0.0],
            _ => {
                let n = self.nodes.len() - 2;
                [self.nodes[i % n + 1], self.nodes[i / n + 1]]
            }
        }
    }

    pub fn dof_coords(&self) -> Vec<[f64; 2]> {
        (0..self.num_dofs()).map(|i| self.dof_coord(i)).collect()
    }

    pub fn grid_function(&self, coeffs: Vec<f64>) -> Result<GridFunction> {
        if coeffs.len() != self.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_dofs(),
                found: coeffs.len(),
            });
        }
        Ok(GridFunction {
            coeffs,
            operator: self.id,
        })
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction {
            coeffs: vec![0.0; self.num_dofs()],
            operator: self.id,
        }
    }

    pub fn check(&self, u: &GridFunction) -> Result<()> {
        if u.operator != self.id {
            return Err(Error::OperatorMismatch);
        }
        Ok(())
    }

    fn mass_cholesky(&self) -> Result<&BandCholesky> {
        if let Some(f) = self.mass_factor.get() {
            return Ok(f);
        }
        let f = BandCholesky::factor(&self.mass.to_band())?;
        Ok(self.mass_factor.get_or_init(|| f))
    }

    /// `M^{-1} b`. Tensor operators solve along each axis with the 1D factor.
    pub fn solve_mass(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_dofs(),
                found: b.len(),
            });
        }
        match &self.factor {
            Some(f1) => {
                let chol = f1.mass_cholesky()?;
                let n = f1.num_dofs();
                let mut x = b.to_vec();
                for row in x.chunks_mut(n) {
                    chol.solve_in_place(row);
                }
                let mut col = vec![0.0; n];
                for ix in 0..n {
                    for iy in 0..n {
                        col[iy] = x[iy * n + ix];
                    }
                    chol.solve_in_place(&mut col);
                    for iy in 0..n {
                        x[iy * n + ix] = col[iy];
                    }
                }
                Ok(x)
            }
            None => Ok(self.mass_cholesky()?.solve(b)),
        }
    }
}

/// Assembles P1 mass and stiffness matrices on the given nodes; the first and
/// last nodes carry the Dirichlet condition and are eliminated.
pub fn assemble_1d(nodes: &[f64]) -> Result<DiscreteOperator> {
    if nodes.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 nodes, got {}",
            nodes.len()
        )));
    }
    if let Some(index) = nodes
        .windows(2)
        .position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite())
    {
        return Err(Error::NonMonotoneNodes { index: index + 1 });
    }
    let n_dofs = nodes.len() - 2;
    let mut kt = Vec::with_capacity(4 * (n_dofs + 1));
    let mut mt = Vec::with_capacity(4 * (n_dofs + 1));
    for e in 0..nodes.len() - 1 {
        let w = nodes[e + 1] - nodes[e];
        let local_k = [[1.0 / w, -1.0 / w], [-1.0 / w, 1.0 / w]];
        let local_m = [[w / 3.0, w / 6.0], [w / 6.0, w / 3.0]];
        for a in 0..2 {
            for b in 0..2 {
                let (ga, gb) = (e + a, e + b);
                // global node g is dof g - 1 when interior
                if ga == 0 || gb == 0 || ga == nodes.len() - 1 || gb == nodes.len() - 1 {
                    continue;
                }
                kt.push((ga - 1, gb - 1, local_k[a][b]));
                mt.push((ga - 1, gb - 1, local_m[a][b]));
            }
        }
    }
    Ok(DiscreteOperator {
        id: OperatorId::fresh(),
        dim: 1,
        mass: CsrMatrix::from_triplets(n_dofs, &mt),
        stiffness: CsrMatrix::from_triplets(n_dofs, &kt),
        nodes: nodes.to_vec(),
        factor: None,
        mass_factor: OnceLock::new(),
    })
}

/// Uniform 1D mesh with `intervals` elements of size `1 / intervals`.
pub fn assemble_1d_uniform(intervals: usize) -> Result<DiscreteOperator> {
    let nodes: Vec<f64> = (0..=intervals)
        .map(|i| i as f64 / intervals as f64)
        .collect();
    assemble_1d(&nodes)
}

/// Bilinear elements on the uniform `intervals x intervals` grid of the unit
/// square: `K2 = K (x) M + M (x) K`, `M2 = M (x) M`.
pub fn assemble_2d_tensor(intervals: usize) -> Result<DiscreteOperator> {
    if intervals < 2 {
        return Err(Error::InvalidConfig(format!(
            "2D grid needs at least 2 intervals per side, got {intervals}"
        )));
    }
    let factor = assemble_1d_uniform(intervals)?;
    let mass = factor.mass.kron(&factor.mass);
    let stiffness = factor
        .stiffness
        .kron(&factor.mass)
        .combine(1.0, &factor.mass.kron(&factor.stiffness), 1.0);
    Ok(DiscreteOperator {
        id: OperatorId::fresh(),
        dim: 2,
        mass,
        stiffness,
        nodes: factor.nodes.clone(),
        factor: Some(Box::new(factor)),
        mass_factor: OnceLock::new(),
    })
}

/// `u^T M v`.
pub fn m_inner(op: &DiscreteOperator, u: &GridFunction, v: &GridFunction) -> Result<f64> {
    op.check(u)?;
    op.check(v)?;
    let mv = op.mass.matvec(&v.coeffs);
    Ok(u.coeffs.iter().zip(&mv).map(|(a, b)| a * b).sum())
}

pub fn m_norm(op: &DiscreteOperator, u: &GridFunction) -> Result<f64> {
    Ok(m_inner(op, u, u)?.max(0.0).sqrt())
}

/// The model right-hand sides: (a)-(d) on `(0, 1)`, (e)-(f) on `(0, 1)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataCase {
    /// `exp(-1/x - 1/(1-x) + 4)`
    A,
    /// `x (1 - x)`
    B,
    /// `min(x, 1 - x)`
    C,
    /// `1`
    D,
    /// `x (1 - x) y (1 - y)`
    E,
    /// indicator of `[1/4, 3/4]^2`
    F,
}

impl DataCase {
    pub const ALL: [DataCase; 6] = [
        DataCase::A,
        DataCase::B,
        DataCase::C,
        DataCase::D,
        DataCase::E,
        DataCase::F,
    ];

    pub fn dimension(self) -> usize {
        match self {
            DataCase::E | DataCase::F => 2,
            _ => 1,
        }
    }

    pub fn tag(self) -> char {
        match self {
            DataCase::A => 'a',
            DataCase::B => 'b',
            DataCase::C => 'c',
            DataCase::D => 'd',
            DataCase::E => 'e',
            DataCase::F => 'f',
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| tag.trim().eq_ignore_ascii_case(&c.tag().to_string()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown data case '{tag}'")))
    }

    /// Per-axis locations where the data has a kink or jump.
    pub fn kinks(self) -> &'static [f64] {
        match self {
            DataCase::C => &[0.5],
            DataCase::F => &[0.25, 0.75],
            _ => &[],
        }
    }

    fn value(self, p: &[f64]) -> f64 {
        match self {
            DataCase::A => {
                let x = p[0];
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    (-1.0 / x - 1.0 / (1.0 - x) + 4.0).exp()
                }
            }
            DataCase::B => p[0] * (1.0 - p[0]),
            DataCase::C => p[0].min(1.0 - p[0]),
            DataCase::D => 1.0,
            DataCase::E => p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]),
            DataCase::F => {
                let inside = |t: f64| (0.25..=0.75).contains(&t);
                if inside(p[0]) && inside(p[1]) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Pointwise value of a data case.
pub fn data_case(case: DataCase, point: &[f64]) -> Result<f64> {
    if point.len() != case.dimension() {
        return Err(Error::DimensionMismatch {
            expected: case.dimension(),
            found: point.len(),
        });
    }
    Ok(case.value(point))
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// `[a, b]` split at the kinks strictly inside it.
fn pieces(a: f64, b: f64, kinks: &[f64]) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    cuts.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    cuts.push(b);
    cuts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn gauss_points(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS5.into_iter().map(move |(x, w)| (mid + half * x, half * w))
}

/// Load vector `b_i = ∫ f φ_i` with 5-point Gauss rules on every element,
/// elements being split at the given per-axis kinks.
pub fn load_vector(
    op: &DiscreteOperator,
    f: &dyn Fn(&[f64]) -> f64,
    kinks: &[f64],
) -> Result<Vec<f64>> {
    let nodes = &op.nodes;
    let last = nodes.len() - 1;
    let mut b = vec![0.0; op.num_dofs()];
    match op.dim {
        1 => {
            for e in 0..last {
                let (xl, xr) = (nodes[e], nodes[e + 1]);
                let w = xr - xl;
                let (mut left, mut right) = (0.0, 0.0);
                for (a, c) in pieces(xl, xr, kinks) {
                    for (x, wt) in gauss_points(a, c) {
                        let fx = f(&[x]);
                        left += wt * fx * (xr - x) / w;
                        right += wt * fx * (x - xl) / w;
                    }
                }
                if e > 0 {
                    b[e - 1] += left;
                }
                if e + 1 < last {
                    b[e] += right;
                }
            }
        }
        _ => {
            let n = last - 1;
            for ey in 0..last {
                let (yl, yr) = (nodes[ey], nodes[ey + 1]);
                for ex in 0..last {
                    let (xl, xr) = (nodes[ex], nodes[ex + 1]);
                    let area = (xr - xl) * (yr - yl);
                    let mut local = [[0.0; 2]; 2];
                    for (ya, yc) in pieces(yl, yr, kinks) {
                        for (y, wy) in gauss_points(ya, yc) {
                            let py = [(yr - y), (y - yl)];
                            for (xa, xc) in pieces(xl, xr, kinks) {
                                for (x, wx) in gauss_points(xa, xc) {
                                    let px = [(xr - x), (x - xl)];
                                    let fxy = f(&[x, y]) * wx * wy / area;
                                    for j in 0..2 {
                                        for i in 0..2 {
                                            local[j][i] += fxy * px[i] * py[j];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    for j in 0..2 {
                        for i in 0..2 {
                            let (gx, gy) = (ex + i, ey + j);
                            if gx == 0 || gy == 0 || gx == last || gy == last {
                                continue;
                            }
                            b[(gy - 1) * n + (gx - 1)] += local[j][i];
                        }
                    }
                }
            }
        }
    }
    if let Some(i) = b.iter().position(|v| !v.is_finite()) {
        return Err(Error::Quadrature(format!("non-finite load entry at dof {i}")));
    }
    Ok(b)
}

/// L²-projection `π_h f`: solves `M c = b` for the quadrature load `b`.
pub fn l2_project(
    op: &DiscreteOperator,
    f: &dyn Fn(&[f64]) -> f64,
    kinks: &[f64],
) -> Result<GridFunction> {
    let b = load_vector(op, f, kinks)?;
    let c = op.solve_mass(&b)?;
    let r: Vec<f64> = op
        .mass
        .matvec(&c)
        .iter()
        .zip(&b)
        .map(|(p, q)| p - q)
        .collect();
    let (res, scale) = (norm2(&r), norm2(&b));
    if res > 1e-12 * scale {
        return Err(Error::Quadrature(format!(
            "projection residual {:.3e} exceeds tolerance",
            res / scale
        )));
    }
    op.grid_function(c)
}

/// L²-projection of one of the model data cases.
pub fn l2_project_case(op: &DiscreteOperator, case: DataCase) -> Result<GridFunction> {
    if case.dimension() != op.dim {
        return Err(Error::DimensionMismatch {
            expected: op.dim,
            found: case.dimension(),
        });
    }
    l2_project(op, &|p| case.value(p), case.kinks())
}
