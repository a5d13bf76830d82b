use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fracstep::experiments::config::parse_list;
use fracstep::experiments::{
    self, parse_solver, ExperimentSpec, FlatConfig, LPolicy, ScalarSpec, SpatialSpec, UmSteps,
    DEFAULT_ITERATIVE_TOL,
};
use fracstep::{assemble_1d, assemble_1d_uniform, assemble_2d_tensor, build_graded_spatial_mesh};
use fracstep::{DataCase, PadeRational, Scheme};

/// Padé time stepping for fractional powers of elliptic operators.
#[derive(Parser, Debug)]
#[command(name = "fracstep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coefficients, poles and residues of r_m for (1+x)^(-alpha).
    PadeInfo {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sup-norm errors of the scalar recurrences over a lambda grid.
    ScalarSweep(ScalarArgs),
    /// 1D time-stepping error table on a uniform mesh.
    #[command(name = "table-1d")]
    Table1d(TableArgs),
    /// 2D time-stepping error table on the unit square.
    #[command(name = "table-2d")]
    Table2d(TableArgs),
    /// Step counts on boundary-graded spatial meshes (f = 1).
    SpatialRefine(SpatialArgs),
    /// Writes M and K in coordinate format and the dof coordinates as CSV.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
struct ScalarArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated alpha values.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    ms: Option<String>,
    #[arg(long)]
    ns: Option<String>,
    /// grm, um or both.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    lambda_min: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated data case tags (a-d in 1D, e-f in 2D).
    #[arg(long)]
    cases: Option<String>,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    ms: Option<String>,
    /// grm, um or both.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    ns: Option<String>,
    /// Spatial mesh size; rounded to 1/intervals.
    #[arg(long)]
    h: Option<f64>,
    /// Intervals per side; overrides --h.
    #[arg(long, alias = "n-per-side")]
    intervals: Option<usize>,
    /// theorem, experiment or fixed:<L>.
    #[arg(long)]
    l_policy: Option<String>,
    /// per-n or matched.
    #[arg(long)]
    um_steps: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// direct or iterative.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpatialArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ms: Option<String>,
    #[arg(long)]
    um_steps: Option<usize>,
    #[arg(long)]
    max_time_n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// uniform-1d, graded-1d or tensor-2d.
    #[arg(long, default_value = "uniform-1d")]
    mesh: String,
    /// Intervals (uniform meshes) or N (graded mesh).
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dir: PathBuf,
}

/// Flag values take precedence over the config file.
struct Merged {
    file: FlatConfig,
}

impl Merged {
    fn new(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => FlatConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => FlatConfig::default(),
        };
        Ok(Self { file })
    }

    fn value<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => Ok(self.file.value(key)?),
        }
    }

    fn string(&self, flag: &Option<String>, key: &str) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).map(str::to_string))
    }

    fn list<T: FromStr>(&self, flag: &Option<String>, key: &str) -> Result<Option<Vec<T>>> {
        self.string(flag, key)
            .map(|s| parse_list(key, &s).map_err(Into::into))
            .transpose()
    }
}

fn parse_schemes(s: &str) -> Result<Vec<Scheme>> {
    Ok(match s {
        "both" => vec![Scheme::Grm, Scheme::Um],
        _ => vec![Scheme::parse(s)?],
    })
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn table_spec(args: &TableArgs, mut spec: ExperimentSpec) -> Result<ExperimentSpec> {
    let cfg = Merged::new(args.config.as_deref())?;
    if let Some(tags) = cfg.list::<String>(&args.cases, "cases")? {
        spec.cases = tags
            .iter()
            .map(|t| DataCase::from_tag(t))
            .collect::<fracstep::Result<_>>()?;
    }
    if let Some(v) = cfg.list(&args.alphas, "alphas")? {
        spec.alphas = v;
    }
    if let Some(v) = cfg.list(&args.ms, "ms")? {
        spec.ms = v;
    }
    if let Some(v) = cfg.list(&args.ns, "ns")? {
        spec.ns = v;
    }
    if let Some(s) = cfg.string(&args.scheme, "scheme") {
        spec.schemes = parse_schemes(&s)?;
    }
    if let Some(h) = cfg.value(args.h, "h")? {
        let h: f64 = h;
        if !(h > 0.0 && h < 1.0) {
            bail!("h = {h} must lie in (0, 1)");
        }
        spec.intervals = (1.0 / h).round() as usize;
    }
    if let Some(n) = cfg.value(args.intervals, "intervals")? {
        spec.intervals = n;
    }
    if let Some(s) = cfg.string(&args.l_policy, "l-policy") {
        spec.l_policy = LPolicy::parse(&s)?;
    }
    if let Some(s) = cfg.string(&args.um_steps, "um-steps") {
        spec.um_steps = UmSteps::parse(&s)?;
    }
    spec.delta = cfg.value(args.delta, "delta")?;
    let tol = cfg.value(args.tol, "tol")?.unwrap_or(DEFAULT_ITERATIVE_TOL);
    if let Some(s) = cfg.string(&args.solver, "solver") {
        spec.solver = Some(parse_solver(&s, tol)?);
    }
    spec.output = cfg.value(args.output.clone(), "output")?;
    spec.validate()?;
    Ok(spec)
}

fn run_table(args: &TableArgs, defaults: ExperimentSpec) -> Result<()> {
    let spec = table_spec(args, defaults)?;
    let table = if spec.dimension == 1 {
        experiments::run_table_1d(&spec)?
    } else {
        experiments::run_table_2d(&spec)?
    };
    table.write_csv(output_writer(spec.output.as_deref())?, spec.l_policy)?;
    Ok(())
}

fn scalar_sweep(args: &ScalarArgs) -> Result<()> {
    let cfg = Merged::new(args.config.as_deref())?;
    let mut spec = ScalarSpec::default();
    if let Some(v) = cfg.list(&args.alphas, "alphas")? {
        spec.alphas = v;
    }
    if let Some(v) = cfg.list(&args.ms, "ms")? {
        spec.ms = v;
    }
    if let Some(v) = cfg.list(&args.ns, "ns")? {
        spec.ns = v;
    }
    if let Some(s) = cfg.string(&args.scheme, "scheme") {
        spec.schemes = parse_schemes(&s)?;
    }
    if let Some(v) = cfg.value(args.lambda_min, "lambda-min")? {
        spec.lambda_min = v;
    }
    if let Some(v) = cfg.value(args.lambda_max, "lambda-max")? {
        spec.lambda_max = v;
    }
    if let Some(v) = cfg.value(args.points, "points")? {
        spec.points = v;
    }
    if let Some(v) = cfg.value(args.delta, "delta")? {
        spec.delta = v;
    }
    spec.output = cfg.value(args.output.clone(), "output")?;
    let rows = experiments::run_scalar_diagnostics(&spec)?;
    experiments::write_scalar_csv(&rows, &spec, output_writer(spec.output.as_deref())?)?;
    Ok(())
}

fn spatial_refine(args: &SpatialArgs) -> Result<()> {
    let cfg = Merged::new(args.config.as_deref())?;
    let mut spec = SpatialSpec::default();
    if let Some(v) = cfg.list(&args.ns, "ns")? {
        spec.ns = v;
    }
    if let Some(v) = cfg.value(args.alpha, "alpha")? {
        spec.alpha = v;
    }
    if let Some(v) = cfg.list(&args.ms, "ms")? {
        spec.ms = v;
    }
    if let Some(v) = cfg.value(args.um_steps, "um-steps")? {
        spec.um_steps = v;
    }
    if let Some(v) = cfg.value(args.max_time_n, "max-time-n")? {
        spec.max_time_n = v;
    }
    spec.delta = cfg.value(args.delta, "delta")?;
    spec.output = cfg.value(args.output.clone(), "output")?;
    let rows = experiments::run_spatial_refinement(&spec)?;
    experiments::write_spatial_csv(&rows, output_writer(spec.output.as_deref())?)?;
    Ok(())
}

fn pade_info(m: usize, alpha: f64, output: Option<&Path>) -> Result<()> {
    let r = PadeRational::new(m, alpha)?;
    let mut w = csv::Writer::from_writer(output_writer(output)?);
    w.write_record(["quantity", "index", "value"])?;
    let mut put = |q: &str, i: usize, v: f64| w.write_record([q, &i.to_string(), &format!("{v:e}")]);
    for (i, &c) in r.p_coeffs().iter().enumerate() {
        put("p", i, c)?;
    }
    for (i, &c) in r.q_coeffs().iter().enumerate() {
        put("q", i, c)?;
    }
    for (i, (&x, &w)) in r.poles().iter().zip(r.residues()).enumerate() {
        put("pole", i, x)?;
        put("residue", i, w)?;
    }
    put("limit_at_infinity", 0, r.limit_at_infinity())?;
    put("rho_m", 0, r.rho_m())?;
    w.flush()?;
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let op = match args.mesh.as_str() {
        "uniform-1d" => assemble_1d_uniform(args.n)?,
        "graded-1d" => assemble_1d(&build_graded_spatial_mesh(args.n)?)?,
        "tensor-2d" => assemble_2d_tensor(args.n)?,
        other => bail!("unknown mesh '{other}'"),
    };
    std::fs::create_dir_all(&args.dir)?;
    let file = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(args.dir.join(name))?))
    };
    experiments::write_coordinate(op.mass(), file("mass.txt")?)?;
    experiments::write_coordinate(op.stiffness(), file("stiffness.txt")?)?;
    experiments::write_nodes_csv(&op, file("nodes.csv")?)?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::PadeInfo { m, alpha, output } => pade_info(*m, *alpha, output.as_deref()),
        Command::ScalarSweep(a) => scalar_sweep(a),
        Command::Table1d(a) => run_table(a, ExperimentSpec::table_1d()),
        Command::Table2d(a) => run_table(a, ExperimentSpec::table_2d()),
        Command::SpatialRefine(a) => spatial_refine(a),
        Command::Export(a) => export(a),
    }
}
