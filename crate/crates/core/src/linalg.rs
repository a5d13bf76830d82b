//! Sparse storage and SPD solvers: banded Cholesky and Jacobi-preconditioned CG.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) outside {n}x{n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), &triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(col, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[range.clone()]
                .iter()
                .zip(&self.values[range])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        if self.same_pattern(other) {
            let values = self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| a * x + b * y)
                .collect();
            return Self {
                n: self.n,
                row_ptr: self.row_ptr.clone(),
                col_idx: self.col_idx.clone(),
                values,
            };
        }
        let mut triplets: Vec<_> = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (i, j, a * v))
            .collect();
        triplets.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, b * v)));
        Self::from_triplets(self.n, &triplets)
    }

    /// Kronecker product `self (x) other`; row index `i * n_other + k`.
    pub fn kron(&self, other: &Self) -> Self {
        let n = self.n * other.n;
        let mut triplets = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                triplets.push((i * other.n + k, j * other.n + l, a * b));
            }
        }
        Self::from_triplets(n, &triplets)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            a[(i, j)] = v;
        }
        a
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = self
            .triplets()
            .into_iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Lower band of a symmetric matrix.
    pub fn to_band(&self) -> SymBand {
        let bw = self.bandwidth();
        let mut band = SymBand::zeros(self.n, bw);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j <= i {
                    band.set(i, j, v);
                }
            }
        }
        band
    }
}

/// Symmetric band matrix; row `i` stores columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j <= i && i - j <= self.bw);
        let idx = self.index(i, j);
        self.data[idx] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.index(i, j)]
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }
}

/// Cholesky factor `L` of a symmetric positive-definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
}

impl BandCholesky {
    pub fn factor(a: &SymBand) -> Result<Self> {
        let mut l = a.clone();
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let k_lo = lo.max(j.saturating_sub(bw));
                let ri = i * w + (k_lo + bw - i);
                let rj = j * w + (k_lo + bw - j);
                let len = j - k_lo;
                let dot: f64 = l.data[ri..ri + len]
                    .iter()
                    .zip(&l.data[rj..rj + len])
                    .map(|(a, b)| a * b)
                    .sum();
                let idx = i * w + (j + bw - i);
                let s = l.data[idx] - dot;
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l.data[idx] = s.sqrt();
                } else {
                    l.data[idx] = s / l.data[j * w + bw];
                }
            }
        }
        Ok(Self { l })
    }

    /// `x <- L^{-1} x`.
    pub fn forward_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let d = &self.l.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + (lo + bw - i)..i * w + bw];
            let dot: f64 = row.iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / d[i * w + bw];
        }
    }

    /// `x <- L^{-T} x`.
    pub fn backward_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let d = &self.l.data;
        for i in (0..n).rev() {
            x[i] /= d[i * w + bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            let row = &d[i * w + (lo + bw - i)..i * w + bw];
            for (xk, &lik) in x[lo..i].iter_mut().zip(row) {
                *xk -= lik * xi;
            }
        }
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        self.forward_in_place(x);
        self.backward_in_place(x);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// How shifted SPD systems are solved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverPolicy {
    DirectBanded,
    Iterative { rel_tol: f64, max_iter: usize },
}

impl SolverPolicy {
    pub fn iterative(rel_tol: f64) -> Self {
        SolverPolicy::Iterative {
            rel_tol,
            max_iter: 20_000,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SolverPolicy::DirectBanded => "direct-banded",
            SolverPolicy::Iterative { .. } => "iterative-pcg",
        }
    }

    /// Relative tolerance, zero for the direct solver.
    pub fn tolerance(&self) -> f64 {
        match self {
            SolverPolicy::DirectBanded => 0.0,
            SolverPolicy::Iterative { rel_tol, .. } => *rel_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on `a x = b`, starting from `x`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = a.dim();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm2(&r) / b_norm;
    let mut iterations = 0;
    while res > rel_tol {
        if iterations == max_iter {
            return Err(Error::NotConverged {
                method: "preconditioned CG",
                iterations,
                residual: res,
            });
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotConverged {
                method: "preconditioned CG (breakdown)",
                iterations,
                residual: res,
            });
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        res = norm2(&r) / b_norm;
    }
    Ok(CgReport {
        iterations,
        relative_residual: res,
    })
}

/// Solves the SPD system `a x = rhs` under `policy`; `guess` seeds the iterative solver.
pub fn solve_spd(
    a: &CsrMatrix,
    rhs: &[f64],
    policy: SolverPolicy,
    guess: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if rhs.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: rhs.len(),
        });
    }
    match policy {
        SolverPolicy::DirectBanded => {
            let chol = BandCholesky::factor(&a.to_band())?;
            Ok(chol.solve(rhs))
        }
        SolverPolicy::Iterative { rel_tol, max_iter } => {
            let mut x = guess.map_or_else(|| vec![0.0; rhs.len()], <[f64]>::to_vec);
            pcg(a, rhs, &mut x, rel_tol, max_iter)?;
            Ok(x)
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
