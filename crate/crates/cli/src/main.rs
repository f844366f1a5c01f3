use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Restricted surface-spline interpolation on the sphere with local Lagrange
/// preconditioning.
#[derive(Debug, Parser)]
#[command(name = "spherelag", version)]
struct Cli {
    /// Worker thread cap (all cores when absent).
    #[arg(long, global = true, env = "SPHERELAG_THREADS")]
    threads: Option<usize>,

    /// Seed for randomized data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate node sets and report their mesh statistics.
    #[command(subcommand)]
    Nodes(NodesCommand),
    /// Full Lagrange function about one center: decay samples as CSV.
    Lagrange(LagrangeArgs),
    /// Build the local Lagrange basis of a node set.
    Build(BuildArgs),
    /// Solve the interpolation problem with the local basis as preconditioner.
    Solve(SolveArgs),
    /// Evaluate an interpolant on a lon-lat grid or at points from a file.
    Eval(EvalArgs),
    /// Gram matrix of degree-1 harmonics on a cap.
    Gram(GramArgs),
    /// Decay and convergence studies.
    #[command(subcommand)]
    Study(StudyCommand),
}

#[derive(Debug, Subcommand)]
enum NodesCommand {
    /// Write a generated node set.
    Gen(GenArgs),
    /// Mesh norm, separation radius and mesh ratio as CSV.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NodeKind {
    Icosahedral,
    Fibonacci,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: NodeKind,
    /// Bisection level of the icosahedral grid (10·4^L + 2 nodes).
    #[arg(long, conflicts_with_all = ["frequency", "n"])]
    level: Option<u32>,
    /// Edge subdivision of the icosahedral grid (10k² + 2 nodes).
    #[arg(long, conflicts_with = "n")]
    frequency: Option<u32>,
    /// Number of Fibonacci nodes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    nodes: PathBuf,
    /// Probe count for the mesh norm estimate.
    #[arg(long)]
    probe: Option<usize>,
}

#[derive(Debug, Args)]
struct LagrangeArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long)]
    center_idx: usize,
    #[arg(long)]
    out_csv: PathBuf,
    /// Longitude resolution of the band-maximum grid.
    #[arg(long, default_value_t = 400)]
    n_lon: usize,
    /// Colatitude resolution of the band-maximum grid.
    #[arg(long, default_value_t = 200)]
    n_lat: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Footprint multiplier: n = M ⌈(log10 N)²⌉ (default 7).
    #[arg(long = "M", conflicts_with_all = ["n", "radius_k"])]
    multiplier: Option<f64>,
    /// Fixed stencil size.
    #[arg(long, conflicts_with = "radius_k")]
    n: Option<usize>,
    /// Stencil radius K h log(1/h).
    #[arg(long = "radius-K")]
    radius_k: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Binary)]
    format: Format,
    /// Retry failed stencils once with twice as many neighbors.
    #[arg(long)]
    grow_on_failure: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StartVector {
    Data,
    Zero,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    basis: PathBuf,
    /// One value per node; uniform random values in [-1, 1] from --seed when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    maxit: usize,
    #[arg(long, value_enum, default_value_t = StartVector::Data)]
    x0: StartVector,
    /// Coefficient file.
    #[arg(long)]
    out: PathBuf,
    /// Solver summary CSV.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Residual history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

/// Evaluation targets: `grid:NLATxNLON` or a node file.
#[derive(Debug, Clone)]
enum Target {
    Grid { n_lat: usize, n_lon: usize },
    File(PathBuf),
}

fn parse_target(s: &str) -> Result<Target, String> {
    match s.strip_prefix("grid:") {
        Some(dims) => {
            let (a, b) = dims.split_once('x').ok_or("expected grid:NLATxNLON")?;
            let n_lat: usize = a.parse().map_err(|_| format!("bad latitude count {a:?}"))?;
            let n_lon: usize = b.parse().map_err(|_| format!("bad longitude count {b:?}"))?;
            if n_lat == 0 || n_lon == 0 {
                return Err("grid dimensions must be positive".into());
            }
            Ok(Target::Grid { n_lat, n_lon })
        }
        None => Ok(Target::File(PathBuf::from(s))),
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    coeffs: PathBuf,
    #[arg(long, value_parser = parse_target, default_value = "grid:300x600")]
    at: Target,
    #[arg(long)]
    out: PathBuf,
}

/// `LON,LAT` in degrees.
fn parse_lonlat(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LON,LAT in degrees")?;
    let lon: f64 = a.trim().parse().map_err(|_| format!("bad longitude {a:?}"))?;
    let lat: f64 = b.trim().parse().map_err(|_| format!("bad latitude {b:?}"))?;
    if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() {
        return Err("latitude must lie in [-90, 90]".into());
    }
    Ok((lon, lat))
}

#[derive(Debug, Args)]
struct GramArgs {
    /// Cap radius in radians.
    #[arg(long)]
    r: f64,
    /// Compare with the Gram matrix of the nodes inside the cap.
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long, requires = "nodes", value_parser = parse_lonlat, allow_hyphen_values = true)]
    cap_center: Option<(f64, f64)>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Node sets given as files or generated on the fly.
#[derive(Debug, Args)]
struct NodeSources {
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    nodes: Vec<PathBuf>,
    /// Fibonacci node counts.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    fibonacci: Vec<usize>,
    /// Icosahedral bisection levels.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    icosahedral: Vec<u32>,
}

#[derive(Debug, Subcommand)]
enum StudyCommand {
    /// Exponential decay fits of one Lagrange function.
    Decay(DecayArgs),
    /// Interpolation and quasi-interpolation errors across node sets.
    Convergence(ConvergenceArgs),
    /// Decay constants for a list of node sets.
    Table1(Table1Args),
}

#[derive(Debug, Args)]
struct DecayArgs {
    #[command(flatten)]
    sources: NodeSources,
    #[arg(long, default_value_t = 2)]
    m: u32,
    /// Center index (the node nearest the north pole when absent).
    #[arg(long)]
    center_idx: Option<usize>,
    #[arg(long, default_value_t = 400)]
    n_lon: usize,
    #[arg(long, default_value_t = 200)]
    n_lat: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TestFunction {
    /// exp(z)
    ExpZ,
    /// 1 + x + 2y - z
    Linear,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    sources: NodeSources,
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, value_enum, default_value_t = TestFunction::ExpZ)]
    function: TestFunction,
    #[arg(long = "M", default_value_t = 7.0)]
    multiplier: f64,
    /// Fibonacci probe count for the sup-norm errors.
    #[arg(long, default_value_t = 20_000)]
    n_probe: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Table1Args {
    #[command(flatten)]
    sources: NodeSources,
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 400)]
    n_lon: usize,
    #[arg(long, default_value_t = 200)]
    n_lat: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ commands::CliError::Usage(_)) => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
