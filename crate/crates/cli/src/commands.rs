use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherelag::diagnostics::{convergence_study, decay_study, table1, ConvergenceOptions, DecayFit, DecayOptions};
use spherelag::geom::{
    default_probe_count, format_nodes, gen_fibonacci, gen_icosahedral, gen_icosahedral_frequency, load_nodes,
    lonlat_grid, mesh_stats,
};
use spherelag::gramstudy::{cap_gram_analytic, cap_gram_compare};
use spherelag::io::{format_coefficients, format_csv, load_basis, load_coefficients, load_values, save_basis, BasisFormat, RunConfig};
use spherelag::locallag::{
    build_local_basis_with, recover_iterate, BuildOptions, InitialGuess, PreconditionedSystem, SolveOptions,
};
use spherelag::neighbors::NeighborIndex;
use spherelag::{Error, FootprintRule, KernelExpansion, KernelSpec, NodeSet, SpherePoint};

use crate::{
    BuildArgs, Cli, Command, ConvergenceArgs, DecayArgs, EvalArgs, Format, GenArgs, GramArgs, LagrangeArgs, NodeKind,
    NodeSources, NodesCommand, SolveArgs, StartVector, StatsArgs, StudyCommand, Table1Args, Target, TestFunction,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad flag combination not caught by the parser.
    Usage(String),
    Domain(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Domain(Error::Io(e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn run_config(command: &str, seed: u64) -> RunConfig {
    RunConfig {
        command: command.to_string(),
        args: std::env::args().skip(1).collect(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_set(path: &Path) -> Result<NodeSet> {
    let loaded = load_nodes(path)?;
    if loaded.normalized_rows > 0 {
        eprintln!("note: {} row(s) of {} normalized to unit length", loaded.normalized_rows, path.display());
    }
    Ok(loaded.nodes)
}

fn spec(m: u32) -> Result<KernelSpec> {
    Ok(KernelSpec::new(m)?)
}

fn row(cells: impl IntoIterator<Item = impl ToString>) -> Vec<String> {
    cells.into_iter().map(|c| c.to_string()).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Nodes(NodesCommand::Gen(a)) => nodes_gen(a, seed),
        Command::Nodes(NodesCommand::Stats(a)) => nodes_stats(a, seed),
        Command::Lagrange(a) => lagrange(a, seed),
        Command::Build(a) => build(a),
        Command::Solve(a) => solve(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Gram(a) => gram(a, seed),
        Command::Study(StudyCommand::Decay(a)) => study_decay(a, seed),
        Command::Study(StudyCommand::Convergence(a)) => study_convergence(a, seed),
        Command::Study(StudyCommand::Table1(a)) => study_table1(a, seed),
    }
}

fn nodes_gen(a: GenArgs, seed: u64) -> Result<()> {
    let set = match (a.kind, a.level, a.frequency, a.n) {
        (NodeKind::Icosahedral, Some(l), None, None) => gen_icosahedral(l)?,
        (NodeKind::Icosahedral, None, Some(k), None) => gen_icosahedral_frequency(k)?,
        (NodeKind::Icosahedral, ..) => return Err(usage("icosahedral nodes need exactly one of --level or --frequency")),
        (NodeKind::Fibonacci, None, None, Some(n)) => gen_fibonacci(n)?,
        (NodeKind::Fibonacci, ..) => return Err(usage("fibonacci nodes need --n and no --level or --frequency")),
    };
    let header: Vec<String> = run_config("nodes gen", seed)
        .header()
        .lines()
        .map(|l| l.trim_start_matches('#').trim().to_string())
        .chain(std::iter::once(format!("N = {}", set.len())))
        .collect();
    fs::write(&a.out, format_nodes(&set, &header))?;
    Ok(())
}

fn nodes_stats(a: StatsArgs, seed: u64) -> Result<()> {
    let set = load_set(&a.nodes)?;
    let probe = a.probe.unwrap_or_else(|| default_probe_count(set.len()));
    if probe == 0 {
        return Err(usage("--probe must be positive"));
    }
    let s = mesh_stats(&set, probe);
    let rows = [row([set.len().to_string(), s.h.to_string(), s.q.to_string(), s.rho.to_string(), s.n_probe.to_string()])];
    emit(None, &format_csv(&run_config("nodes stats", seed), &["n", "h", "q", "rho", "n_probe"], &rows))
}

fn decay_options(n_lon: usize, n_lat: usize) -> Result<DecayOptions> {
    if n_lon == 0 || n_lat == 0 {
        return Err(usage("grid resolutions must be positive"));
    }
    Ok(DecayOptions { n_lon, n_lat, ..DecayOptions::default() })
}

fn lagrange(a: LagrangeArgs, seed: u64) -> Result<()> {
    let set = load_set(&a.nodes)?;
    let study = decay_study(&set, &spec(a.m)?, a.center_idx, &decay_options(a.n_lon, a.n_lat)?)?;
    let mut rows: Vec<Vec<String>> = study.function_samples.iter().map(|(t, v)| row([t.to_string(), v.to_string(), String::new()])).collect();
    rows.extend(study.coefficient_samples.iter().map(|(t, c)| row([t.to_string(), String::new(), c.to_string()])));
    let text = format_csv(&run_config("lagrange", seed), &["t", "abs_value", "abs_coefficient"], &rows);
    fs::write(&a.out_csv, text)?;
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let rule = match (a.multiplier, a.n, a.radius_k) {
        (Some(multiplier), None, None) => FootprintRule::Count { multiplier },
        (None, Some(n), None) => FootprintRule::Fixed { n },
        (None, None, Some(k)) => FootprintRule::Radius { k },
        (None, None, None) => FootprintRule::default(),
        _ => return Err(usage("--M, --n and --radius-K are mutually exclusive")),
    };
    let set = load_set(&a.nodes)?;
    let opts = BuildOptions { grow_on_failure: a.grow_on_failure };
    let basis = build_local_basis_with(&set, &spec(a.m)?, rule, &opts)?;
    let format = match a.format {
        Format::Binary => BasisFormat::Binary,
        Format::Csv => BasisFormat::Csv,
    };
    save_basis(&basis, &a.out, format)?;
    let (lo, hi) = basis.stencil_sizes.iter().fold((usize::MAX, 0), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    eprintln!("built {} local functions, stencil sizes {lo}..={hi}, {} nonzeros", basis.len(), basis.nnz());
    Ok(())
}

fn random_data(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn rule_name(rule: FootprintRule) -> String {
    match rule {
        FootprintRule::Count { multiplier } => format!("count:{multiplier}"),
        FootprintRule::Fixed { n } => format!("fixed:{n}"),
        FootprintRule::Radius { k } => format!("radius:{k}"),
    }
}

fn solve(a: SolveArgs, seed: u64) -> Result<()> {
    if !(a.tol > 0.0) || a.maxit == 0 {
        return Err(usage("--tol and --maxit must be positive"));
    }
    let set = load_set(&a.nodes)?;
    let basis = load_basis(&a.basis, set.points().to_vec())?;
    let f = match &a.data {
        Some(p) => load_values(p)?,
        None => random_data(set.len(), seed),
    };
    let x0 = match a.x0 {
        StartVector::Data => InitialGuess::Data,
        StartVector::Zero => InitialGuess::Zero,
    };
    let opts = SolveOptions { tol: a.tol, maxit: a.maxit, x0 };
    let config = run_config("solve", seed);
    let system = PreconditionedSystem::new(&basis)?;
    let (exp, report, residual_inf, failure) = match system.solve(&f, &opts) {
        Ok(sol) => (sol.expansion(&basis), sol.report, sol.residual_inf, None),
        Err(Error::NotConverged(nc)) => {
            let (ak, c) = recover_iterate(&basis, &nc)?;
            let exp = KernelExpansion::new(basis.spec, basis.points.clone(), ak, c)?;
            let report = nc.report.clone();
            (exp, report, f64::NAN, Some(Error::NotConverged(nc)))
        }
        Err(e) => return Err(e.into()),
    };
    fs::write(&a.out, format_coefficients(&config, &exp))?;
    if let Some(path) = &a.report {
        let columns = ["n", "m", "rule", "tol", "maxit", "iterations", "converged", "final_relres", "residual_inf"];
        let rows = [row([
            basis.len().to_string(),
            basis.spec.m().to_string(),
            rule_name(basis.rule),
            a.tol.to_string(),
            a.maxit.to_string(),
            report.iterations.to_string(),
            report.converged.to_string(),
            report.final_relres.to_string(),
            residual_inf.to_string(),
        ])];
        fs::write(path, format_csv(&config, &columns, &rows))?;
    }
    if let Some(path) = &a.history {
        let rows: Vec<Vec<String>> =
            report.residual_history.iter().enumerate().map(|(i, r)| row([i.to_string(), r.to_string()])).collect();
        fs::write(path, format_csv(&config, &["iteration", "relative_residual"], &rows))?;
    }
    eprintln!("{} iterations, relative residual {:e}", report.iterations, report.final_relres);
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn eval(a: EvalArgs, seed: u64) -> Result<()> {
    let set = load_set(&a.nodes)?;
    let exp = load_coefficients(&a.coeffs, set.points().to_vec())?;
    let config = run_config("eval", seed);
    let text = match &a.at {
        Target::Grid { n_lat, n_lon } => {
            let pts = lonlat_grid(*n_lat, *n_lon);
            let rows: Vec<Vec<String>> = pts
                .iter()
                .zip(exp.eval_many(&pts))
                .map(|(p, v)| {
                    let (lon, lat) = p.lon_lat();
                    row([lon.to_degrees().to_string(), lat.to_degrees().to_string(), v.to_string()])
                })
                .collect();
            format_csv(&config, &["lon", "lat", "value"], &rows)
        }
        Target::File(path) => {
            let targets = load_set(path)?;
            let rows: Vec<Vec<String>> = targets
                .points()
                .iter()
                .zip(exp.eval_many(targets.points()))
                .map(|(p, v)| row([p.x, p.y, p.z, v]))
                .collect();
            format_csv(&config, &["x", "y", "z", "value"], &rows)
        }
    };
    fs::write(&a.out, text)?;
    Ok(())
}

fn gram(a: GramArgs, seed: u64) -> Result<()> {
    let analytic = cap_gram_analytic(a.r)?;
    let mut rows = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            rows.push(row([format!("g{i}{j}"), analytic.g[(i, j)].to_string()]));
        }
    }
    rows.push(row(["area".to_string(), analytic.area().to_string()]));
    rows.push(row(["lambda_min_normalized".to_string(), analytic.lambda_min_normalized().to_string()]));
    rows.push(row(["asymptotic".to_string(), analytic.asymptotic().to_string()]));
    rows.push(row(["asymptotic_ratio".to_string(), analytic.asymptotic_ratio().to_string()]));
    rows.push(row(["bound".to_string(), analytic.bound().to_string()]));
    if let Some(path) = &a.nodes {
        let set = load_set(path)?;
        let center = match a.cap_center {
            Some((lon, lat)) => SpherePoint::from_lon_lat(lon.to_radians(), lat.to_radians()),
            None => SpherePoint::north_pole(),
        };
        let mut inside = NeighborIndex::build(set.points()).ball(&center, a.r);
        inside.sort_unstable();
        let pts: Vec<SpherePoint> = inside.iter().map(|&i| *set.point(i)).collect();
        let report = cap_gram_compare(&pts, &center, a.r)?;
        rows.push(row(["n_points".to_string(), report.n_points.to_string()]));
        rows.push(row(["lambda_min_discrete".to_string(), report.lambda_min_discrete.to_string()]));
        rows.push(row(["norm_inv_discrete".to_string(), report.norm_inv_discrete.to_string()]));
        rows.push(row(["h_c".to_string(), report.h_c.to_string()]));
        rows.push(row(["h_c_over_r".to_string(), report.h_c_over_r.to_string()]));
        rows.push(row(["holds".to_string(), report.holds.to_string()]));
        rows.push(row(["conclusive".to_string(), report.conclusive.to_string()]));
    }
    emit(a.out.as_deref(), &format_csv(&run_config("gram", seed), &["quantity", "value"], &rows))
}

fn collect_sets(s: &NodeSources) -> Result<Vec<NodeSet>> {
    let mut sets = Vec::new();
    for p in &s.nodes {
        sets.push(load_set(p)?);
    }
    for &n in &s.fibonacci {
        sets.push(gen_fibonacci(n)?);
    }
    for &l in &s.icosahedral {
        sets.push(gen_icosahedral(l)?);
    }
    if sets.is_empty() {
        return Err(usage("no node sets given (use --nodes, --fibonacci or --icosahedral)"));
    }
    Ok(sets)
}

fn fit_cells(fit: &spherelag::Result<DecayFit>, what: &str) -> [String; 2] {
    match fit {
        Ok(f) => [f.nu.to_string(), f.c.to_string()],
        Err(e) => {
            eprintln!("warning: {what} fit failed: {e}");
            [String::new(), String::new()]
        }
    }
}

fn study_decay(a: DecayArgs, seed: u64) -> Result<()> {
    let sets = collect_sets(&a.sources)?;
    if sets.len() != 1 {
        return Err(usage("a decay study takes exactly one node set"));
    }
    let set = &sets[0];
    let center = a.center_idx.unwrap_or_else(|| set.nearest_to(&SpherePoint::north_pole()));
    let study = decay_study(set, &spec(a.m)?, center, &decay_options(a.n_lon, a.n_lat)?)?;
    let columns = ["n", "center", "h", "q", "kind", "nu", "c", "t_min", "t_max", "r2", "n_used", "plateau_fraction"];
    let mut rows = Vec::new();
    for (kind, fit) in [("function", &study.function_fit), ("coefficient", &study.coefficient_fit)] {
        let mut r = row([set.len().to_string(), center.to_string(), study.stats.h.to_string(), study.stats.q.to_string(), kind.to_string()]);
        match fit {
            Ok(f) => r.extend(row([f.nu, f.c, f.window.0, f.window.1, f.r2, f.n_used as f64, f.plateau_fraction])),
            Err(e) => {
                eprintln!("warning: {kind} fit failed: {e}");
                r.extend(std::iter::repeat_n(String::new(), 7));
            }
        }
        rows.push(r);
    }
    emit(a.out.as_deref(), &format_csv(&run_config("study decay", seed), &columns, &rows))
}

fn study_convergence(a: ConvergenceArgs, seed: u64) -> Result<()> {
    let sets = collect_sets(&a.sources)?;
    if a.n_probe == 0 || !(a.tol > 0.0) {
        return Err(usage("--n-probe and --tol must be positive"));
    }
    let opts = ConvergenceOptions {
        n_probe: a.n_probe,
        rule: FootprintRule::Count { multiplier: a.multiplier },
        solve_tol: a.tol,
        ..ConvergenceOptions::default()
    };
    let f = match a.function {
        TestFunction::ExpZ => |p: &SpherePoint| p.z.exp(),
        TestFunction::Linear => |p: &SpherePoint| 1.0 + p.x + 2.0 * p.y - p.z,
    };
    let rows: Vec<Vec<String>> = convergence_study(&sets, &spec(a.m)?, f, &opts)?
        .iter()
        .map(|r| {
            row([
                r.n.to_string(),
                r.h.to_string(),
                r.interp_error.to_string(),
                r.quasi_error.to_string(),
                opt(r.interp_order),
                opt(r.quasi_order),
                r.gmres_iterations.to_string(),
            ])
        })
        .collect();
    let columns = ["n", "h", "interp_error", "quasi_error", "interp_order", "quasi_order", "gmres_iterations"];
    emit(a.out.as_deref(), &format_csv(&run_config("study convergence", seed), &columns, &rows))
}

fn study_table1(a: Table1Args, seed: u64) -> Result<()> {
    let sets = collect_sets(&a.sources)?;
    let table = table1(&sets, &spec(a.m)?, &decay_options(a.n_lon, a.n_lat)?)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            let mut cells = row([r.n.to_string(), r.h.to_string(), r.rho.to_string()]);
            cells.extend(fit_cells(&r.function_fit, "function"));
            cells.extend(fit_cells(&r.coefficient_fit, "coefficient"));
            cells
        })
        .collect();
    let columns = ["n", "h", "rho", "nu_l", "c_l", "nu_c", "c_c"];
    emit(a.out.as_deref(), &format_csv(&run_config("study table1", seed), &columns, &rows))
}
