//! Convergence studies: time-stepping error tables in 1D and 2D, the graded
//! spatial mesh study, and scalar sweeps. Every table writes as CSV with one
//! header row; rows carry the shift, solver and level count used.

pub mod config;

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_1d, assemble_1d_uniform, assemble_2d_tensor, l2_project_case, m_norm, DataCase,
    DiscreteOperator, GridFunction,
};
use crate::linalg::{CsrMatrix, SolverPolicy};
use crate::mesh::{build_graded_spatial_mesh, levels_for_mesh_size, levels_for_spectrum, TimeMesh};
use crate::scalar::{log_space, scalar_error_sweep, ScalarRunConfig, Scheme};
use crate::spectral::{eig_1d, eig_2d_tensor, SpectralDecomposition};
use crate::stepper::{estimate_spectral_bounds, run_scheme, RunReport, StepperConfig};

pub use config::FlatConfig;

/// `log2(e_n / e_2n)`.
pub fn convergence_order(e_n: f64, e_2n: f64) -> Result<f64> {
    for e in [e_n, e_2n] {
        if !(e > 0.0) {
            return Err(Error::NonPositiveError(e));
        }
    }
    Ok((e_n / e_2n).log2())
}

/// Minus the least-squares slope of `log2 e` against `log2 N`.
pub fn fitted_order(ns: &[usize], errors: &[f64]) -> Result<f64> {
    if ns.len() != errors.len() || ns.len() < 2 {
        return Err(Error::InvalidConfig(
            "slope fit needs at least two (N, error) pairs".into(),
        ));
    }
    if let Some(&e) = errors.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::NonPositiveError(e));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(-sxy / sxx)
}

/// How many dyadic levels the GRM time mesh uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LPolicy {
    /// `ceil(log2 λ_max)` from the estimated spectrum.
    Theorem,
    /// `ceil(2 |log h| / log 2)`.
    Experiment,
    Fixed(usize),
}

impl LPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(LPolicy::Theorem),
            "experiment" => Ok(LPolicy::Experiment),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|l| l.parse().ok())
                .filter(|&l| l > 0)
                .map(LPolicy::Fixed)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "l-policy '{s}' is not theorem, experiment or fixed:<L>"
                    ))
                }),
        }
    }

    pub fn label(self) -> String {
        match self {
            LPolicy::Theorem => "theorem".into(),
            LPolicy::Experiment => "experiment".into(),
            LPolicy::Fixed(l) => format!("fixed:{l}"),
        }
    }

    pub fn levels(self, h: f64, lambda_max: f64) -> usize {
        match self {
            LPolicy::Theorem => levels_for_spectrum(lambda_max),
            LPolicy::Experiment => levels_for_mesh_size(h),
            LPolicy::Fixed(l) => l,
        }
    }
}

/// Number of uniform steps paired with a given `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UmSteps {
    /// `N` steps.
    PerN,
    /// `(L + 1) N` steps, the same count as the GRM run.
    Matched,
}

impl UmSteps {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "n" | "per-n" => Ok(UmSteps::PerN),
            "matched" => Ok(UmSteps::Matched),
            _ => Err(Error::InvalidConfig(format!(
                "um-steps '{s}' is not per-n or matched"
            ))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            UmSteps::PerN => "per-n",
            UmSteps::Matched => "matched",
        }
    }
}

pub fn parse_solver(name: &str, tol: f64) -> Result<SolverPolicy> {
    match name {
        "direct" | "direct-banded" => Ok(SolverPolicy::DirectBanded),
        "iterative" | "pcg" | "iterative-pcg" => Ok(SolverPolicy::iterative(tol)),
        _ => Err(Error::InvalidConfig(format!(
            "solver '{name}' is not direct or iterative"
        ))),
    }
}

/// Default relative tolerance of the iterative solver.
pub const DEFAULT_ITERATIVE_TOL: f64 = 1e-12;

/// One time-stepping error study.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dimension: usize,
    pub cases: Vec<DataCase>,
    pub alphas: Vec<f64>,
    pub ms: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub ns: Vec<usize>,
    /// Intervals per side of the uniform spatial mesh, `1/h`.
    pub intervals: usize,
    pub l_policy: LPolicy,
    pub um_steps: UmSteps,
    /// Defaults to half the estimated smallest eigenvalue.
    pub delta: Option<f64>,
    /// Defaults to the banded direct solver in 1D and to warm-started PCG
    /// with relative tolerance [`DEFAULT_ITERATIVE_TOL`] in 2D.
    pub solver: Option<SolverPolicy>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    /// The 1D setting: `h = 1/1000`, `L = ceil(2|log h|/log 2)`, cases (a)-(d).
    pub fn table_1d() -> Self {
        Self {
            dimension: 1,
            cases: DataCase::ALL[..4].to_vec(),
            alphas: vec![0.1, 0.5, 0.9],
            ms: vec![1, 2],
            schemes: vec![Scheme::Grm, Scheme::Um],
            ns: vec![1, 2, 4, 8, 16],
            intervals: 1000,
            l_policy: LPolicy::Experiment,
            um_steps: UmSteps::Matched,
            delta: None,
            solver: None,
            output: None,
        }
    }

    /// The 2D setting: `h = 1/100`, `L = 14`, `m = 2`, cases (e)-(f).
    pub fn table_2d() -> Self {
        Self {
            dimension: 2,
            cases: DataCase::ALL[4..].to_vec(),
            alphas: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            ms: vec![2],
            schemes: vec![Scheme::Grm, Scheme::Um],
            ns: vec![1, 2, 4, 8, 16, 32],
            intervals: 100,
            l_policy: LPolicy::Fixed(14),
            um_steps: UmSteps::Matched,
            delta: None,
            solver: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.dimension == 1 || self.dimension == 2) {
            return bad(format!("dimension {} is not 1 or 2", self.dimension));
        }
        if let Some(c) = self.cases.iter().find(|c| c.dimension() != self.dimension) {
            return bad(format!("case ({}) is not a {}D case", c.tag(), self.dimension));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha = {a} is outside (0, 1)"));
        }
        if self.ns.is_empty() || self.ns[0] == 0 || self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return bad("N list must be positive and strictly increasing".into());
        }
        if self.cases.is_empty() || self.alphas.is_empty() || self.ms.is_empty() || self.schemes.is_empty() {
            return bad("cases, alphas, m values and schemes must be non-empty".into());
        }
        if self.intervals < 2 {
            return bad(format!("{} intervals is too coarse", self.intervals));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub case: DataCase,
    pub scheme: Scheme,
    pub m: usize,
    pub alpha: f64,
    pub n: usize,
    pub steps: usize,
    pub solves: usize,
    /// `||U - u_h||_M / ||u_h||_M`.
    pub error: f64,
    /// `log2(E_n / E_2n)` when `2n` is also in the table.
    pub order: Option<f64>,
    pub levels: usize,
    pub delta: f64,
    pub solver: SolverPolicy,
    pub max_norm_growth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub rows: Vec<TableRow>,
}

const TABLE_HEADER: [&str; 15] = [
    "case",
    "scheme",
    "m",
    "alpha",
    "N",
    "steps",
    "solves",
    "error",
    "order",
    "L",
    "delta",
    "solver",
    "tol",
    "l_policy",
    "max_norm_growth",
];

impl Table {
    fn find(&self, case: DataCase, scheme: Scheme, m: usize, alpha: f64, n: usize) -> Option<&TableRow> {
        self.rows.iter().find(|r| {
            r.case == case && r.scheme == scheme && r.m == m && r.alpha == alpha && r.n == n
        })
    }

    pub fn error(&self, case: DataCase, scheme: Scheme, m: usize, alpha: f64, n: usize) -> Option<f64> {
        self.find(case, scheme, m, alpha, n).map(|r| r.error)
    }

    pub fn order(&self, case: DataCase, scheme: Scheme, m: usize, alpha: f64, n: usize) -> Option<f64> {
        self.find(case, scheme, m, alpha, n).and_then(|r| r.order)
    }

    pub fn max_norm_growth(&self) -> f64 {
        self.rows.iter().map(|r| r.max_norm_growth).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W, l_policy: LPolicy) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.case.tag().to_string(),
                r.scheme.name().to_string(),
                r.m.to_string(),
                r.alpha.to_string(),
                r.n.to_string(),
                r.steps.to_string(),
                r.solves.to_string(),
                format!("{:e}", r.error),
                r.order.map_or_else(String::new, |o| format!("{o:.4}")),
                r.levels.to_string(),
                format!("{:e}", r.delta),
                r.solver.name().to_string(),
                format!("{:e}", r.solver.tolerance()),
                l_policy.label(),
                format!("{:e}", r.max_norm_growth),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn decompose(op: &DiscreteOperator) -> Result<SpectralDecomposition> {
    if op.dim() == 2 {
        eig_2d_tensor(op)
    } else {
        eig_1d(op)
    }
}

fn relative_error(op: &DiscreteOperator, u: &GridFunction, reference: &GridFunction, norm: f64) -> Result<f64> {
    Ok(m_norm(op, &u.sub(reference)?)? / norm)
}

fn choose_delta(requested: Option<f64>, lambda_min_est: f64) -> Result<f64> {
    let delta = requested.unwrap_or(0.5 * lambda_min_est);
    if !(delta > 0.0 && delta < lambda_min_est) {
        return Err(Error::InvalidConfig(format!(
            "delta = {delta} must lie in (0, {lambda_min_est:.6})"
        )));
    }
    Ok(delta)
}

/// Time mesh for `scheme` at refinement `n`.
pub fn scheme_mesh(scheme: Scheme, levels: usize, n: usize, um_steps: UmSteps) -> Result<TimeMesh> {
    match (scheme, um_steps) {
        (Scheme::Grm, _) => TimeMesh::geometric(levels, n),
        (Scheme::Um, UmSteps::PerN) => TimeMesh::uniform(n),
        (Scheme::Um, UmSteps::Matched) => TimeMesh::uniform((levels + 1) * n),
    }
}

/// Runs every `(case, α, m, scheme, N)` cell of `spec` against the spectral reference.
pub fn run_table(spec: &ExperimentSpec) -> Result<Table> {
    spec.validate()?;
    let op = match spec.dimension {
        1 => assemble_1d_uniform(spec.intervals)?,
        _ => assemble_2d_tensor(spec.intervals)?,
    };
    let bounds = estimate_spectral_bounds(&op)?;
    let delta = choose_delta(spec.delta, bounds.lambda_min_est)?;
    let solver = spec.solver.unwrap_or(match spec.dimension {
        1 => SolverPolicy::DirectBanded,
        _ => SolverPolicy::iterative(DEFAULT_ITERATIVE_TOL),
    });
    let levels = spec
        .l_policy
        .levels(1.0 / spec.intervals as f64, bounds.lambda_max_est);
    let decomp = decompose(&op)?;

    struct Target {
        case: DataCase,
        alpha: f64,
        f: GridFunction,
        u: GridFunction,
        norm: f64,
    }
    let mut targets = Vec::new();
    for &case in &spec.cases {
        let f = l2_project_case(&op, case)?;
        for &alpha in &spec.alphas {
            let u = decomp.reference_power(&f, alpha)?;
            let norm = m_norm(&op, &u)?;
            targets.push(Target {
                case,
                alpha,
                f: f.clone(),
                u,
                norm,
            });
        }
    }

    let mut cells = Vec::new();
    for (ti, _) in targets.iter().enumerate() {
        for &scheme in &spec.schemes {
            for &m in &spec.ms {
                for &n in &spec.ns {
                    cells.push((ti, scheme, m, n));
                }
            }
        }
    }

    let rows: Vec<TableRow> = cells
        .par_iter()
        .map(|&(ti, scheme, m, n)| {
            let target = &targets[ti];
            let cfg = StepperConfig {
                alpha: target.alpha,
                m,
                delta,
                mesh: scheme_mesh(scheme, levels, n, spec.um_steps)?,
                solver,
            };
            let (u, report) = run_scheme(&target.f, &op, &cfg)?;
            Ok(TableRow {
                case: target.case,
                scheme,
                m,
                alpha: target.alpha,
                n,
                steps: report.steps,
                solves: report.solves,
                error: relative_error(&op, &u, &target.u, target.norm)?,
                order: None,
                levels,
                delta,
                solver,
                max_norm_growth: report.max_norm_growth,
            })
        })
        .collect::<Result<_>>()?;

    let mut table = Table { rows };
    let orders: Vec<Option<f64>> = table
        .rows
        .iter()
        .map(|r| {
            table
                .error(r.case, r.scheme, r.m, r.alpha, 2 * r.n)
                .and_then(|e2| convergence_order(r.error, e2).ok())
        })
        .collect();
    for (r, o) in table.rows.iter_mut().zip(orders) {
        r.order = o;
    }
    Ok(table)
}

pub fn run_table_1d(spec: &ExperimentSpec) -> Result<Table> {
    if spec.dimension != 1 {
        return Err(Error::InvalidConfig("table-1d needs a 1D spec".into()));
    }
    run_table(spec)
}

pub fn run_table_2d(spec: &ExperimentSpec) -> Result<Table> {
    if spec.dimension != 2 {
        return Err(Error::InvalidConfig("table-2d needs a 2D spec".into()));
    }
    run_table(spec)
}

/// Graded-mesh study with `f = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpec {
    pub ns: Vec<usize>,
    pub alpha: f64,
    pub ms: Vec<usize>,
    /// Uniform step count for the UM column.
    pub um_steps: usize,
    /// Largest per-interval count tried in the GRM step search.
    pub max_time_n: usize,
    pub delta: Option<f64>,
    pub output: Option<PathBuf>,
}

impl Default for SpatialSpec {
    fn default() -> Self {
        Self {
            ns: vec![4, 8, 16],
            alpha: 0.5,
            ms: vec![1, 2],
            um_steps: 100_000,
            max_time_n: 1 << 12,
            delta: None,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRow {
    pub n: usize,
    pub nx: usize,
    /// Richardson estimate of the semi-discrete error, `4/3 ||u_h - I_h u_{h/2}||_M`.
    pub e_semi_proxy: f64,
    pub m: usize,
    /// GRM error at the first step count below the threshold.
    pub e_grm: f64,
    /// That step count, `(L+1) N_t`; `None` if the search cap was hit.
    pub ns: Option<usize>,
    pub time_levels: usize,
    pub e_um: f64,
    pub um_steps: usize,
    pub delta: f64,
    pub max_norm_growth: f64,
}

struct GradedLevel {
    nodes: Vec<f64>,
    op: DiscreteOperator,
    f: GridFunction,
    u: GridFunction,
    delta: f64,
}

fn graded_level(n: usize, alpha: f64, delta: Option<f64>) -> Result<GradedLevel> {
    let nodes = build_graded_spatial_mesh(n)?;
    let op = assemble_1d(&nodes)?;
    let bounds = estimate_spectral_bounds(&op)?;
    let delta = choose_delta(delta, bounds.lambda_min_est)?;
    let f = l2_project_case(&op, DataCase::D)?;
    let u = eig_1d(&op)?.reference_power(&f, alpha)?;
    Ok(GradedLevel {
        nodes,
        op,
        f,
        u,
        delta,
    })
}

/// Values of the fine-mesh function at the coarse nodes (the coarse nodes are a subset).
fn restrict(fine_nodes: &[f64], fine: &[f64], coarse_nodes: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(coarse_nodes.len() - 2);
    let mut j = 0;
    for &x in &coarse_nodes[1..coarse_nodes.len() - 1] {
        while j < fine_nodes.len() && fine_nodes[j] < x - 1e-15 {
            j += 1;
        }
        if j == fine_nodes.len() || (fine_nodes[j] - x).abs() > 1e-15 {
            return Err(Error::InvalidConfig(format!(
                "coarse node {x} is not a fine node"
            )));
        }
        out.push(fine[j - 1]);
    }
    Ok(out)
}

fn absolute_error(op: &DiscreteOperator, u: &GridFunction, reference: &GridFunction) -> Result<f64> {
    m_norm(op, &u.sub(reference)?)
}

/// The spatial refinement table: for each `N` and `m`, the GRM step count
/// needed to push the time-stepping error below the semi-discrete error
/// estimate, and the UM error at a fixed large step count.
pub fn run_spatial_refinement(spec: &SpatialSpec) -> Result<Vec<SpatialRow>> {
    if spec.ns.is_empty() || spec.ns.iter().any(|&n| n < 2) {
        return Err(Error::InvalidConfig("spatial N values must be at least 2".into()));
    }
    let mut rows = Vec::new();
    for &n in &spec.ns {
        let coarse = graded_level(n, spec.alpha, spec.delta)?;
        let fine = graded_level(2 * n, spec.alpha, spec.delta)?;
        let restricted = coarse
            .op
            .grid_function(restrict(&fine.nodes, fine.u.coeffs(), &coarse.nodes)?)?;
        let e_semi_proxy = 4.0 / 3.0 * absolute_error(&coarse.op, &restricted, &coarse.u)?;

        let h_min = coarse
            .nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let time_levels = levels_for_mesh_size(h_min);

        let per_m: Vec<SpatialRow> = spec
            .ms
            .par_iter()
            .map(|&m| {
                let run = |mesh: TimeMesh| -> Result<(f64, RunReport)> {
                    let cfg = StepperConfig {
                        alpha: spec.alpha,
                        m,
                        delta: coarse.delta,
                        mesh,
                        solver: SolverPolicy::DirectBanded,
                    };
                    let (u, report) = run_scheme(&coarse.f, &coarse.op, &cfg)?;
                    Ok((absolute_error(&coarse.op, &u, &coarse.u)?, report))
                };
                let mut growth: f64 = 0.0;
                let mut found = None;
                let mut last = f64::NAN;
                let mut nt = 1;
                while nt <= spec.max_time_n {
                    let (e, report) = run(TimeMesh::geometric(time_levels, nt)?)?;
                    growth = growth.max(report.max_norm_growth);
                    last = e;
                    if e < e_semi_proxy {
                        found = Some((time_levels + 1) * nt);
                        break;
                    }
                    nt *= 2;
                }
                let (e_um, report) = run(TimeMesh::uniform(spec.um_steps)?)?;
                growth = growth.max(report.max_norm_growth);
                Ok(SpatialRow {
                    n,
                    nx: coarse.nodes.len() - 1,
                    e_semi_proxy,
                    m,
                    e_grm: last,
                    ns: found,
                    time_levels,
                    e_um,
                    um_steps: spec.um_steps,
                    delta: coarse.delta,
                    max_norm_growth: growth,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(per_m);
    }
    Ok(rows)
}

pub fn write_spatial_csv<W: Write>(rows: &[SpatialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "N",
        "nx",
        "e_semi_proxy",
        "m",
        "E_GRM",
        "NS",
        "time_L",
        "E_UM",
        "um_steps",
        "delta",
        "solver",
        "tol",
        "threshold",
        "max_norm_growth",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.nx.to_string(),
            format!("{:e}", r.e_semi_proxy),
            r.m.to_string(),
            format!("{:e}", r.e_grm),
            r.ns.map_or_else(|| "none".into(), |s| s.to_string()),
            r.time_levels.to_string(),
            format!("{:e}", r.e_um),
            r.um_steps.to_string(),
            format!("{:e}", r.delta),
            SolverPolicy::DirectBanded.name().to_string(),
            "0e0".to_string(),
            "richardson-proxy".to_string(),
            format!("{:e}", r.max_norm_growth),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Scalar sup-error study over a log-spaced `λ` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSpec {
    pub alphas: Vec<f64>,
    pub ms: Vec<usize>,
    pub ns: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
    pub delta: f64,
    pub output: Option<PathBuf>,
}

impl Default for ScalarSpec {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.5, 0.9],
            ms: vec![1, 2],
            ns: vec![8, 16, 32, 64],
            schemes: vec![Scheme::Grm],
            lambda_min: 1.0,
            lambda_max: 1e6,
            points: 1000,
            delta: 0.5,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRow {
    pub scheme: Scheme,
    pub m: usize,
    pub alpha: f64,
    pub n: usize,
    pub steps: usize,
    pub sup_error: f64,
    /// Fitted order over all `N` of the same `(scheme, m, α)`.
    pub slope: f64,
}

pub fn run_scalar_diagnostics(spec: &ScalarSpec) -> Result<Vec<ScalarRow>> {
    if !(spec.delta > 0.0 && spec.delta <= spec.lambda_min && spec.lambda_min < spec.lambda_max) {
        return Err(Error::InvalidConfig(
            "need 0 < delta <= lambda_min < lambda_max".into(),
        ));
    }
    let grid = log_space(spec.lambda_min, spec.lambda_max, spec.points);
    let mut rows = Vec::new();
    for &scheme in &spec.schemes {
        for &m in &spec.ms {
            for &alpha in &spec.alphas {
                let mut group = Vec::new();
                for &n in &spec.ns {
                    let mesh = match scheme {
                        Scheme::Grm => crate::mesh::build_geometric_mesh(spec.lambda_max, n, None)?,
                        Scheme::Um => TimeMesh::uniform(n)?,
                    };
                    let steps = mesh.num_steps();
                    let cfg = ScalarRunConfig::new(alpha, spec.delta, m, mesh)?;
                    let errors = scalar_error_sweep(&grid, &cfg, scheme)?;
                    let sup_error = errors.iter().copied().fold(0.0, f64::max);
                    group.push(ScalarRow {
                        scheme,
                        m,
                        alpha,
                        n,
                        steps,
                        sup_error,
                        slope: f64::NAN,
                    });
                }
                let ns: Vec<usize> = group.iter().map(|r| r.n).collect();
                let es: Vec<f64> = group.iter().map(|r| r.sup_error).collect();
                let slope = fitted_order(&ns, &es).unwrap_or(f64::NAN);
                group.iter_mut().for_each(|r| r.slope = slope);
                rows.extend(group);
            }
        }
    }
    Ok(rows)
}

pub fn write_scalar_csv<W: Write>(rows: &[ScalarRow], spec: &ScalarSpec, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "m",
        "alpha",
        "N",
        "steps",
        "sup_error",
        "fitted_order",
        "lambda_min",
        "lambda_max",
        "points",
        "delta",
    ])?;
    for r in rows {
        w.write_record([
            r.scheme.name().to_string(),
            r.m.to_string(),
            r.alpha.to_string(),
            r.n.to_string(),
            r.steps.to_string(),
            format!("{:e}", r.sup_error),
            format!("{:.4}", r.slope),
            format!("{:e}", spec.lambda_min),
            format!("{:e}", spec.lambda_max),
            spec.points.to_string(),
            format!("{:e}", spec.delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `row col value` lines (0-based indices), one per stored entry.
pub fn write_coordinate<W: Write>(a: &CsrMatrix, mut out: W) -> Result<()> {
    writeln!(out, "% {} {} {}", a.dim(), a.dim(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(out, "{i} {j} {v:e}")?;
    }
    Ok(())
}

/// Writes the dof coordinates as `dof,x,y`.
pub fn write_nodes_csv<W: Write>(op: &DiscreteOperator, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dof", "x", "y"])?;
    for (i, [x, y]) in op.dof_coords().into_iter().enumerate() {
        w.write_record([i.to_string(), x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_examples() {
        assert_eq!(convergence_order(4.0, 1.0).unwrap(), 2.0);
        assert_eq!(convergence_order(3e-7, 3e-7).unwrap(), 0.0);
        assert!(convergence_order(0.0, 1.0).is_err());
        assert!(convergence_order(1.0, -1.0).is_err());
    }

    #[test]
    fn fitted_order_of_exact_power_law() {
        let ns = [8, 16, 32, 64];
        let es: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powi(-4)).collect();
        assert!((fitted_order(&ns, &es).unwrap() - 4.0).abs() < 1e-12);
        assert!(fitted_order(&ns[..1], &es[..1]).is_err());
    }

    #[test]
    fn l_policy_parsing() {
        assert_eq!(LPolicy::parse("fixed:14").unwrap(), LPolicy::Fixed(14));
        assert_eq!(LPolicy::parse("experiment").unwrap().levels(1e-3, 0.0), 20);
        assert_eq!(LPolicy::Theorem.levels(0.1, 1000.0), 10);
        assert!(LPolicy::parse("fixed:0").is_err());
        assert!(LPolicy::parse("other").is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = ExperimentSpec::table_1d();
        assert!(spec.validate().is_ok());
        spec.ns = vec![8, 4];
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::table_2d();
        spec.cases = vec![DataCase::A];
        assert!(spec.validate().is_err());
        let mut spec = ExperimentSpec::table_1d();
        spec.alphas = vec![1.0];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn restriction_picks_shared_nodes() {
        let fine = [0.0, 0.25, 0.5, 0.75, 1.0];
        let coarse = [0.0, 0.5, 1.0];
        assert_eq!(restrict(&fine, &[1.0, 2.0, 3.0], &coarse).unwrap(), vec![2.0]);
        assert!(restrict(&fine, &[1.0, 2.0, 3.0], &[0.0, 0.4, 1.0]).is_err());
    }

    #[test]
    fn small_table_is_consistent() {
        let spec = ExperimentSpec {
            intervals: 40,
            ns: vec![2, 4],
            cases: vec![DataCase::B],
            alphas: vec![0.5],
            ..ExperimentSpec::table_1d()
        };
        let table = run_table_1d(&spec).unwrap();
        assert_eq!(table.rows.len(), 8);
        let o = table.order(DataCase::B, Scheme::Grm, 1, 0.5, 2).unwrap();
        assert!(o > 1.5, "{o}");
        assert!(table.order(DataCase::B, Scheme::Grm, 1, 0.5, 4).is_none());
        assert!(table.max_norm_growth() <= 1e-9);
        let mut buf = Vec::new();
        table.write_csv(&mut buf, spec.l_policy).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("case,scheme,m,alpha,N,steps"));
        assert_eq!(text.lines().count(), 9);
    }
}
