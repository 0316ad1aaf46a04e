use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use reduite::audit::{duality_audit, AuditOptions, AuditReport};
use reduite::cone::SuperharmonicCone;
use reduite::error::{Error, Result};
use reduite::exhaustion::Exhaustion;
use reduite::function::GridFunction;
use reduite::grid::{MarkovGrid, NodeSet};
use reduite::instances::{random_instance, InstanceKind};
use reduite::io;
use reduite::jensen::{jensen_envelope, optimal_measure, JensenOptions};
use reduite::reduite::{reduce, Solver, SolverConfig};
use reduite::schemes::{
    decreasing_continuous_approx, exhaustion_envelope, polar_refinement_study, usc_approximation, ConeLevel,
};

#[derive(Parser)]
#[command(
    name = "reduite",
    version,
    about = "Reduced functions and Jensen envelopes on finite Markov grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the obstacle problem for the reduced function R_φ.
    Reduce(ReduceArgs),
    /// Jensen envelope by linear programming, optionally with optimal measures.
    Jensen(JensenArgs),
    /// Compare J, J', R and φ ∨ R̂ pairwise.
    Audit(AuditArgs),
    /// Grid refinement studies.
    Refine(RefineArgs),
    /// Reductions along an exhaustion by subdomains.
    Exhaust(ExhaustArgs),
    /// Approximation schemes from below and from above.
    Approx(ApproxArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConeArg {
    /// Nonnegative superharmonic functions.
    W,
    /// Superharmonic functions of either sign.
    S,
}

impl ConeArg {
    fn build(self, grid: &MarkovGrid) -> SuperharmonicCone {
        match self {
            ConeArg::W => SuperharmonicCone::w_cone(grid),
            ConeArg::S => SuperharmonicCone::s_cone(grid),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Psor,
    Value,
    Policy,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Psor => Solver::Psor,
            SolverArg::Value => Solver::Value,
            SolverArg::Policy => Solver::Policy,
        }
    }
}

#[derive(Args)]
struct Inputs {
    /// Domain description (JSON).
    domain: PathBuf,
    /// Obstacle as a `node,value` CSV.
    phi: PathBuf,
}

impl Inputs {
    fn load(&self) -> Result<(MarkovGrid, GridFunction)> {
        let grid = io::read_domain(&self.domain)?;
        let phi = io::read_function_for(&self.phi, &grid)?;
        Ok((grid, phi))
    }
}

#[derive(Args)]
struct ReduceArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "psor")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "w")]
    cone: ConeArg,
    /// Output directory; receives `reduced.csv` and `reduce.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[group(id = "nodes", required = true, multiple = false, args = ["x", "all"])]
struct JensenArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Evaluate at a single node.
    #[arg(long)]
    x: Option<usize>,
    /// Evaluate at every node.
    #[arg(long)]
    all: bool,
    /// Also write the optimal Jensen measures.
    #[arg(long)]
    measures: bool,
    #[arg(long, value_enum, default_value = "w")]
    cone: ConeArg,
    /// Output directory; receives `jensen.csv`, `jensen.json` and `measures.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    domain: Option<PathBuf>,
    phi: Option<PathBuf>,
    /// Exhaustion file; the whole interior in one step when absent.
    #[arg(long)]
    exhaustion: Option<PathBuf>,
    #[arg(long, default_value_t = reduite::audit::DEFAULT_GAP_TOL)]
    gap_tol: f64,
    /// Audit this many random instances instead of the given files.
    #[arg(long, conflicts_with_all = ["domain", "phi", "exhaustion"])]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest lattice side in random mode.
    #[arg(long, default_value_t = 15)]
    max_side: usize,
    /// Write each random instance as `domain_K.json` and `phi_K.csv` here.
    #[arg(long, requires = "random")]
    save_instances: Option<PathBuf>,
    /// Report file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    /// Point spike on refining lattices of the unit cube.
    Polar,
}

fn number(s: &str) -> std::result::Result<f64, String> {
    let parsed = match s.split_once('/') {
        Some((p, q)) => p
            .trim()
            .parse::<f64>()
            .and_then(|p| q.trim().parse::<f64>().map(|q| p / q)),
        None => s.trim().parse::<f64>(),
    };
    parsed.map_err(|e| format!("{s:?}: {e}"))
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long, value_enum, default_value = "polar")]
    study: Study,
    /// Continuum coordinates of the spike.
    #[arg(long, value_delimiter = ',', value_parser = number, required = true)]
    point: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = number, default_value = "1")]
    heights: Vec<f64>,
    /// Mesh sizes, e.g. `1/8,1/16,1/32`.
    #[arg(long, value_delimiter = ',', value_parser = number, required = true)]
    h_list: Vec<f64>,
    /// Probe position relative to the spike; `0.25` along the first axis by default.
    #[arg(long, value_delimiter = ',', value_parser = number)]
    probe_offset: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Table file (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    W,
    Local,
}

#[derive(Args)]
struct ExhaustArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    exhaustion: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "w")]
    level: LevelArg,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Output directory; receives `levels.csv` and `exhaust.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApproxArgs {
    #[command(subcommand)]
    scheme: Scheme,
}

#[derive(Subcommand)]
enum Scheme {
    /// Increasing bounded approximations ψ_n ↑ with R_φ = φ ∨ sup R_{ψ_n}.
    Usc {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        /// Output directory; receives `usc.csv` and `approx.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Envelopes of ψ + G1/m for m = 1, 2, 4, … and their limit.
    Decreasing {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        /// Output directory; receives `decreasing.csv` and `approx.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

enum Outcome {
    Ok,
    Failed,
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn node_table(path: &Path, columns: &[&str], series: &[&GridFunction]) -> Result<()> {
    let mut header = vec!["node"];
    header.extend_from_slice(columns);
    let n = series.first().map_or(0, |s| s.len());
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            std::iter::once(i.to_string())
                .chain(series.iter().map(|s| fmt(s[i])))
                .collect()
        })
        .collect();
    io::write_table(path, &header, &rows)
}

fn cmd_reduce(a: &ReduceArgs) -> Result<Outcome> {
    let (grid, phi) = a.inputs.load()?;
    let cfg = SolverConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        solver: a.solver.into(),
    };
    let res = reduce(&grid, &phi, &a.cone.build(&grid), &cfg)?;
    ensure_dir(&a.out)?;
    io::write_function(&io::output_path(&a.out, "reduced.csv"), &res.u)?;
    io::write_json(&io::output_path(&a.out, "reduce.json"), &res.to_json())?;
    println!(
        "reduce: {} nodes, {} iterations, residual {:e}",
        grid.n(),
        res.iterations,
        res.residual
    );
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct PointReport {
    x: usize,
    value: f64,
}

fn cmd_jensen(a: &JensenArgs) -> Result<Outcome> {
    let (grid, phi) = a.inputs.load()?;
    let cone = a.cone.build(&grid);
    ensure_dir(&a.out)?;
    if let Some(x) = a.x {
        let om = optimal_measure(&grid, &phi, x, &cone)?;
        io::write_table(
            &io::output_path(&a.out, "jensen.csv"),
            &["node", "value"],
            &[vec![x.to_string(), fmt(om.value)]],
        )?;
        io::write_json(
            &io::output_path(&a.out, "jensen.json"),
            &PointReport { x, value: om.value },
        )?;
        if a.measures {
            io::write_json(&io::output_path(&a.out, "measures.json"), &[om.measure.to_json()])?;
        }
        println!("jensen: J({x}) = {}", om.value);
        return Ok(Outcome::Ok);
    }
    let mut opts = JensenOptions::default();
    if a.measures {
        opts = opts.with_measures();
    }
    let report = jensen_envelope(&grid, &phi, &cone, &opts)?;
    io::write_function(&io::output_path(&a.out, "jensen.csv"), &report.j)?;
    io::write_json(&io::output_path(&a.out, "jensen.json"), &report.to_json())?;
    if let Some(ms) = &report.measures {
        let json: Vec<_> = ms.iter().map(|m| m.to_json()).collect();
        io::write_json(&io::output_path(&a.out, "measures.json"), &json)?;
    }
    println!(
        "jensen: {} nodes, gap to the reduction {:e}",
        grid.n(),
        report.duality_gap
    );
    Ok(Outcome::Ok)
}

fn print_audit(label: &str, r: &AuditReport) {
    let verdict = if r.passed { "PASS" } else { "FAIL" };
    println!(
        "{verdict} {label}: max gap {:e}, threshold {:e}",
        r.max_gap(),
        r.threshold
    );
    for g in r.gaps.iter().filter(|g| !g.passed) {
        println!("  {} vs {}: {:e}", g.left, g.right, g.gap);
    }
}

#[derive(Serialize)]
struct InstanceAudit {
    index: usize,
    kind: &'static str,
    nodes: usize,
    nonnegative: bool,
    max_gap: f64,
    threshold: f64,
    passed: bool,
}

#[derive(Serialize)]
struct PropertyReport {
    seed: u64,
    gap_tol: f64,
    instances: Vec<InstanceAudit>,
    passed: bool,
}

fn center_exhaustion(grid: &MarkovGrid) -> Result<Exhaustion> {
    let interior = grid.interior();
    match interior.get(interior.len() / 2) {
        Some(&c) => Exhaustion::grow_from(grid, &NodeSet::from_ids(grid.n(), [c])?),
        None => Exhaustion::single(grid),
    }
}

fn cmd_audit(a: &AuditArgs) -> Result<Outcome> {
    let opts = AuditOptions {
        gap_tol: a.gap_tol,
        ..AuditOptions::default()
    };
    if let Some(count) = a.random {
        if let Some(dir) = &a.save_instances {
            ensure_dir(dir)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let mut instances = Vec::with_capacity(count);
        for index in 0..count {
            let kind = InstanceKind::ALL[index % InstanceKind::ALL.len()];
            let nonnegative = (index / InstanceKind::ALL.len()) % 2 == 1;
            let (grid, phi) = random_instance(kind, a.max_side, nonnegative, &mut rng)?;
            if let Some(dir) = &a.save_instances {
                io::write_domain(&io::output_path(dir, &format!("domain_{index}.json")), &grid)?;
                io::write_function(&io::output_path(dir, &format!("phi_{index}.csv")), &phi)?;
            }
            let report = duality_audit(&grid, &phi, Some(&center_exhaustion(&grid)?), &opts)?;
            print_audit(
                &format!("instance {index} ({}, {} nodes)", kind.id(), grid.n()),
                &report,
            );
            instances.push(InstanceAudit {
                index,
                kind: kind.id(),
                nodes: grid.n(),
                nonnegative,
                max_gap: report.max_gap(),
                threshold: report.threshold,
                passed: report.passed,
            });
        }
        let passed = instances.iter().all(|i| i.passed);
        let failed = instances.iter().filter(|i| !i.passed).count();
        io::write_json(
            &a.out,
            &PropertyReport {
                seed: a.seed,
                gap_tol: a.gap_tol,
                instances,
                passed,
            },
        )?;
        println!("audit: {count} instances, {failed} failed");
        return Ok(if passed { Outcome::Ok } else { Outcome::Failed });
    }
    let (Some(domain), Some(phi)) = (&a.domain, &a.phi) else {
        return Err(Error::InvalidInput(
            "audit needs a domain and an obstacle file, or --random".into(),
        ));
    };
    let inputs = Inputs {
        domain: domain.clone(),
        phi: phi.clone(),
    };
    let (grid, phi) = inputs.load()?;
    let exhaustion = match &a.exhaustion {
        Some(p) => Some(io::read_exhaustion(p, &grid)?),
        None => None,
    };
    let report = duality_audit(&grid, &phi, exhaustion.as_ref(), &opts)?;
    io::write_json(&a.out, &report)?;
    print_audit("audit", &report);
    Ok(if report.passed { Outcome::Ok } else { Outcome::Failed })
}

fn cmd_refine(a: &RefineArgs) -> Result<Outcome> {
    let Study::Polar = a.study;
    let offset = a.probe_offset.clone().unwrap_or_else(|| {
        let mut o = vec![0.0; a.point.len()];
        if let Some(first) = o.first_mut() {
            *first = 0.25;
        }
        o
    });
    let cfg = SolverConfig::with_tol(a.tol);
    let mut rows = Vec::new();
    let mut passed = true;
    for &height in &a.heights {
        let study = polar_refinement_study(&a.point, height, &a.h_list, &offset, &cfg)?;
        let verdict = if study.passed { "PASS" } else { "FAIL" };
        let values: Vec<String> = study.rows.iter().map(|r| format!("{:.6}", r.value)).collect();
        println!("{verdict} height {height}: {} [{}]", study.property, values.join(", "));
        passed &= study.passed;
        for r in &study.rows {
            rows.push(vec![
                fmt(height),
                fmt(r.h),
                r.nodes.to_string(),
                r.spike.to_string(),
                r.probe.to_string(),
                fmt(r.value),
            ]);
        }
    }
    io::write_table(&a.out, &["height", "h", "nodes", "spike", "probe", "value"], &rows)?;
    Ok(if passed { Outcome::Ok } else { Outcome::Failed })
}

#[derive(Serialize)]
struct ExhaustReport {
    levels: usize,
    final_gap: f64,
}

fn cmd_exhaust(a: &ExhaustArgs) -> Result<Outcome> {
    let (grid, phi) = a.inputs.load()?;
    let exhaustion = match &a.exhaustion {
        Some(p) => io::read_exhaustion(p, &grid)?,
        None => Exhaustion::single(&grid)?,
    };
    let level = match a.level {
        LevelArg::W => ConeLevel::W,
        LevelArg::Local => ConeLevel::Local,
    };
    let seq = exhaustion_envelope(&grid, &phi, &exhaustion, level, &SolverConfig::with_tol(a.tol))?;
    ensure_dir(&a.out)?;
    let names: Vec<String> = (1..=seq.levels.len()).map(|k| format!("v{k}")).collect();
    let mut columns: Vec<&str> = names.iter().map(String::as_str).collect();
    columns.push("reduced");
    let mut series: Vec<&GridFunction> = seq.levels.iter().collect();
    series.push(&seq.reduced);
    node_table(&io::output_path(&a.out, "levels.csv"), &columns, &series)?;
    io::write_json(
        &io::output_path(&a.out, "exhaust.json"),
        &ExhaustReport {
            levels: seq.levels.len(),
            final_gap: seq.final_gap,
        },
    )?;
    println!("exhaust: {} levels, final gap {:e}", seq.levels.len(), seq.final_gap);
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct UscReport {
    thresholds: Vec<f64>,
    supports: Vec<Vec<usize>>,
    sup_gap: f64,
}

#[derive(Serialize)]
struct DecreasingReport {
    m: Vec<u64>,
    limit_gap: f64,
    stable: bool,
}

fn cmd_approx(a: &ApproxArgs) -> Result<Outcome> {
    match &a.scheme {
        Scheme::Usc { inputs, tol, out } => {
            let (grid, phi) = inputs.load()?;
            let u = usc_approximation(&grid, &phi, &SolverConfig::with_tol(*tol))?;
            ensure_dir(out)?;
            let names: Vec<String> = (1..=u.reduced_psi.len()).map(|k| format!("r{k}")).collect();
            let mut columns: Vec<&str> = names.iter().map(String::as_str).collect();
            columns.push("reduced");
            let mut series: Vec<&GridFunction> = u.reduced_psi.iter().collect();
            series.push(&u.reduced);
            node_table(&io::output_path(out, "usc.csv"), &columns, &series)?;
            io::write_json(
                &io::output_path(out, "approx.json"),
                &UscReport {
                    thresholds: u.thresholds.clone(),
                    supports: u.supports.clone(),
                    sup_gap: u.sup_gap,
                },
            )?;
            println!("approx usc: {} steps, sup gap {:e}", u.psi.len(), u.sup_gap);
        }
        Scheme::Decreasing { inputs, steps, out } => {
            let (grid, psi) = inputs.load()?;
            let d = decreasing_continuous_approx(&grid, &psi, *steps, &JensenOptions::default())?;
            ensure_dir(out)?;
            let names: Vec<String> = d.m.iter().map(|m| format!("m{m}")).collect();
            let mut columns: Vec<&str> = names.iter().map(String::as_str).collect();
            columns.extend(["limit", "reduced"]);
            let mut series: Vec<&GridFunction> = d.j.iter().collect();
            series.extend([&d.limit, &d.reduced]);
            node_table(&io::output_path(out, "decreasing.csv"), &columns, &series)?;
            io::write_json(
                &io::output_path(out, "approx.json"),
                &DecreasingReport {
                    m: d.m.clone(),
                    limit_gap: d.limit_gap,
                    stable: d.stable,
                },
            )?;
            println!(
                "approx decreasing: {} steps, limit gap {:e}, stable: {}",
                d.m.len(),
                d.limit_gap,
                d.stable
            );
        }
    }
    Ok(Outcome::Ok)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("REDUITE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidInput(format!("REDUITE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn run(cli: &Cli) -> Result<Outcome> {
    configure_threads()?;
    match &cli.command {
        Command::Reduce(a) => cmd_reduce(a),
        Command::Jensen(a) => cmd_jensen(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Exhaust(a) => cmd_exhaust(a),
        Command::Approx(a) => cmd_approx(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NotConverged { .. } => 2,
                ref e if e.is_input_error() => 1,
                _ => 3,
            })
        }
    }
}
