//! Time meshes on `[0, 1]` and the boundary-graded spatial mesh.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    /// Dyadic breakpoints `t_i = 2^(i-1-L)`, each interval split into `n` steps.
    Geometric { levels: usize, n: usize },
    Uniform { n: usize },
}

/// A single time step: start time `t` and length `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    kind: MeshKind,
    breakpoints: Vec<f64>,
    steps: Vec<Step>,
}

/// `L = ceil(log2(lambda_max))`.
pub fn levels_for_spectrum(lambda_max: f64) -> usize {
    lambda_max.log2().ceil().max(1.0) as usize
}

/// `L = ceil(2 |log h| / log 2)`.
pub fn levels_for_mesh_size(h: f64) -> usize {
    (2.0 * h.ln().abs() / 2f64.ln()).ceil().max(1.0) as usize
}

/// Geometrically refined mesh. `L` comes from `lambda_max` unless overridden.
pub fn build_geometric_mesh(
    lambda_max: f64,
    n: usize,
    levels_override: Option<usize>,
) -> Result<TimeMesh> {
    let levels = match levels_override {
        Some(0) => {
            return Err(Error::InvalidConfig(
                "geometric mesh needs at least one level".into(),
            ))
        }
        Some(l) => l,
        None => {
            if !(lambda_max > 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "lambda_max = {lambda_max} must exceed 1"
                )));
            }
            levels_for_spectrum(lambda_max)
        }
    };
    TimeMesh::geometric(levels, n)
}

pub fn build_uniform_mesh(n: usize) -> Result<TimeMesh> {
    TimeMesh::uniform(n)
}

impl TimeMesh {
    pub fn geometric(levels: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("N must be positive".into()));
        }
        if levels == 0 || levels > 1000 {
            return Err(Error::InvalidConfig(format!(
                "number of levels {levels} out of range"
            )));
        }
        let mut breakpoints = Vec::with_capacity(levels + 2);
        breakpoints.push(0.0);
        for i in 1..=levels + 1 {
            breakpoints.push(dyadic(i as i32 - 1 - levels as i32));
        }

        let mut steps = Vec::with_capacity((levels + 1) * n);
        for interval in 0..=levels {
            let (start, end) = (breakpoints[interval], breakpoints[interval + 1]);
            // k_0 = t_1 / N and k_n = t_n / N otherwise; both equal (end - start) / N.
            let k = if interval == 0 { end } else { start } / n as f64;
            for j in 0..n {
                steps.push(Step {
                    t: start + j as f64 * k,
                    k,
                });
            }
        }
        Ok(Self {
            kind: MeshKind::Geometric { levels, n },
            breakpoints,
            steps,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("N must be positive".into()));
        }
        let k = 1.0 / n as f64;
        let breakpoints: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let steps = (0..n)
            .map(|i| Step {
                t: breakpoints[i],
                k,
            })
            .collect();
        Ok(Self {
            kind: MeshKind::Uniform { n },
            breakpoints,
            steps,
        })
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self.kind, MeshKind::Geometric { .. })
    }

    /// Coarse breakpoints: `t_0 .. t_{L+1}` for the geometric mesh, all nodes for the uniform one.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Every fine step in order.
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// All fine time nodes `0 = t_0 < ... < t_K = 1`.
    pub fn nodes(&self) -> Vec<f64> {
        let mut nodes: Vec<f64> = self.steps.iter().map(|s| s.t).collect();
        nodes.push(1.0);
        nodes
    }

    /// `(k_n, t_{n,j})` for interval `n` and sub-step `j` in `0..=N`.
    /// For the uniform mesh `n` must be 0 and `j` indexes the nodes.
    pub fn step_of(&self, n: usize, j: usize) -> Option<(f64, f64)> {
        match self.kind {
            MeshKind::Geometric { levels, n: per } => {
                if n > levels || j > per {
                    return None;
                }
                let start = self.breakpoints[n];
                let k = self.steps[n * per].k;
                let t = if j == per {
                    self.breakpoints[n + 1]
                } else {
                    start + j as f64 * k
                };
                Some((k, t))
            }
            MeshKind::Uniform { n: count } => {
                if n != 0 || j > count {
                    return None;
                }
                Some((1.0 / count as f64, self.breakpoints[j]))
            }
        }
    }
}

fn dyadic(exponent: i32) -> f64 {
    // exact power of two
    f64::from_bits(((exponent + 1023) as u64) << 52)
}

/// Number of dyadic levels for the graded spatial mesh: the smallest `L`
/// with `2^(-L) < h^2`, `h = 1 / (4N)`.
pub fn graded_levels(n: usize) -> usize {
    let h = 1.0 / (4.0 * n as f64);
    let target = h * h;
    let mut levels = 1;
    while dyadic(-(levels as i32)) >= target {
        levels += 1;
    }
    levels
}

/// Nodes of the boundary-graded mesh on `[0, 1]`: the geometric mesh restricted
/// to `[0, 1/2]` (width `1/(4N)` on `[1/4, 1/2]`) and reflected about `1/2`.
pub fn build_graded_spatial_mesh(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "graded spatial mesh needs N >= 2, got {n}"
        )));
    }
    let levels = graded_levels(n);
    let mesh = TimeMesh::geometric(levels, n)?;
    // Intervals I_0 .. I_{L-1} cover [0, t_L] = [0, 1/2].
    let half: Vec<f64> = mesh.steps()[..levels * n].iter().map(|s| s.t).collect();
    let mut nodes = half.clone();
    nodes.push(0.5);
    nodes.extend(half.iter().rev().map(|&x| 1.0 - x));
    Ok(nodes)
}
