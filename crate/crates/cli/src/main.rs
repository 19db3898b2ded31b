//! `ccpmsp` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration or input
//! error, 3 budget exhausted without an incumbent, 4 solver failure.

mod bench;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use ccpmsp::dd::DdVariant;
use ccpmsp::decomposition::{
    solve_ccpmsp, BackendChoice, CutFamily, LoopMode, SolveOptions, SolveOutcome, CSV_VERSION_LINE,
};
use ccpmsp::generate::{make_instance, GenConfig, SamplingRegion};
use ccpmsp::master::SolveStatus;
use ccpmsp::model::DatasetKind;
use ccpmsp::netflow::{CutStrategy, FlowDiagramKind};
use ccpmsp::oracle::{verify_solution, OracleLimits};
use ccpmsp::{Candidate, Instance};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use bench::InstanceTag;

/// Problem sizes (jobs, machines) of the standard benchmark grid.
const GRID: [(usize, usize); 9] = [
    (60, 6),
    (80, 8),
    (100, 10),
    (72, 6),
    (96, 8),
    (120, 10),
    (84, 6),
    (112, 8),
    (140, 10),
];

#[derive(Parser)]
#[command(name = "ccpmsp", version, about = "Chance-constrained parallel machine scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance (or a grid of them) as JSON.
    Generate(GenerateArgs),
    /// Solve one instance and print its result row.
    Solve(SolveArgs),
    /// Re-check a solution file against its instance.
    Verify(VerifyArgs),
    /// Solve a matrix of instances and configurations.
    Bench(BenchArgs),
    /// Recompute summary tables from a results file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DatasetArg {
    Ors,
    Vrp,
    Equal,
}

impl From<DatasetArg> for DatasetKind {
    fn from(d: DatasetArg) -> Self {
        match d {
            DatasetArg::Ors => DatasetKind::Ors,
            DatasetArg::Vrp => DatasetKind::Vrp,
            DatasetArg::Equal => DatasetKind::Equal,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegionArg {
    Square,
    Disc,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "ors")]
    dataset: DatasetArg,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long, default_value_t = 100)]
    scenarios: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    dif: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Jobs per machine; defaults to jobs / machines.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, value_enum, default_value = "square")]
    region: RegionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Write every size of the standard grid into `--out-dir` instead.
    #[arg(long, requires = "out_dir")]
    grid: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Instances per grid cell, with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    per_cell: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Lj,
    Js,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CutArg {
    Nogood,
    Iis,
    Basic,
    Strategy1,
    Strategy2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FlowArg {
    Bdd,
    Mdd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Iterative,
    Lazy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Builtin,
    External,
}

/// Solver settings shared by `solve` and `bench`.
#[derive(Args, Clone)]
struct SolverArgs {
    /// Time budget in seconds.
    #[arg(long, default_value_t = 1200.0)]
    budget: f64,
    #[arg(long, value_enum, default_value = "iterative")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "builtin")]
    backend: BackendArg,
    /// JSON file with an `external_solver_cmd` entry.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_symmetry: bool,
    #[arg(long)]
    no_relaxation: bool,
    /// Threads for subproblem checks.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "js")]
    variant: VariantArg,
    #[arg(long, value_enum, default_value = "iis")]
    cut: CutArg,
    /// Flow diagram used by the Benders cuts.
    #[arg(long, value_enum, default_value = "mdd")]
    flow: FlowArg,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the schedule found as JSON.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Print the CSV header lines before the row.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance files or directories of them.
    #[arg(required = true)]
    instances: Vec<PathBuf>,
    /// Configurations as `model:cut`, e.g. `js:iis`, `lj:nogood`, `mdd:basic`.
    #[arg(long = "run", value_delimiter = ',', default_value = "js:iis,lj:iis,mdd:basic")]
    runs: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Concurrent solves; each then uses a single worker.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Per-run CSV; summary tables go next to it with suffix `.agg.csv`.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    input: PathBuf,
    /// Defaults to the input path with suffix `.agg.csv`.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 2, error: error.into() }
    }
}

impl From<ccpmsp::Error> for Failure {
    fn from(e: ccpmsp::Error) -> Failure {
        use ccpmsp::Error as E;
        let code = match e {
            E::Backend(_) | E::NoProgress(_) | E::Contract(_) => 4,
            _ => 2,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Failure {
        Failure::config(error)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn gen_config(a: &GenerateArgs, kind: DatasetKind, jobs: usize, machines: usize, seed: u64) -> GenConfig {
    let mut cfg = GenConfig::new(kind, jobs, machines, a.dif, seed);
    cfg.n_scenarios = a.scenarios;
    cfg.epsilon = a.epsilon;
    cfg.capacity = a.capacity;
    cfg.region = match a.region {
        RegionArg::Square => SamplingRegion::UnitSquare,
        RegionArg::Disc => SamplingRegion::UnitDisc,
    };
    cfg
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let kind = DatasetKind::from(a.dataset);
    if a.grid {
        let dir = a.out_dir.as_ref().expect("clap enforces out_dir");
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (jobs, machines) in GRID {
            for k in 0..a.per_cell {
                let seed = a.seed + k;
                let inst = make_instance(&gen_config(a, kind, jobs, machines, seed))?;
                let name = format!("{}_{jobs}_{machines}_{}_{seed}.json", kind.name(), a.dif);
                inst.save(&dir.join(name))?;
            }
        }
        return Ok(());
    }
    let (Some(jobs), Some(machines)) = (a.jobs, a.machines) else {
        return Err(Failure::config(anyhow!("--jobs and --machines are required without --grid")));
    };
    let inst = make_instance(&gen_config(a, kind, jobs, machines, a.seed))?;
    match &a.out {
        Some(path) => inst.save(path)?,
        None => println!("{}", inst.to_json()?),
    }
    Ok(())
}

fn solve_options(
    solver: &SolverArgs,
    variant: VariantArg,
    cut: CutArg,
    flow: FlowArg,
    workers: usize,
) -> CliResult<SolveOptions> {
    if !(solver.budget > 0.0 && solver.budget.is_finite()) {
        return Err(Failure::config(anyhow!("budget must be a positive number of seconds")));
    }
    let diagram = match flow {
        FlowArg::Bdd => FlowDiagramKind::Bdd,
        FlowArg::Mdd => FlowDiagramKind::Mdd,
    };
    let cuts = match cut {
        CutArg::Nogood => CutFamily::NoGood,
        CutArg::Iis => CutFamily::Iis,
        CutArg::Basic => CutFamily::Flow { diagram, strategy: CutStrategy::Basic },
        CutArg::Strategy1 => CutFamily::Flow { diagram, strategy: CutStrategy::LayerMin },
        CutArg::Strategy2 => CutFamily::Flow { diagram, strategy: CutStrategy::Lifted },
    };
    let backend = match solver.backend {
        BackendArg::Builtin => BackendChoice::BuiltIn,
        BackendArg::External => BackendChoice::External(external_command(solver.config.as_deref())?),
    };
    Ok(SolveOptions {
        variant: match variant {
            VariantArg::Lj => DdVariant::LastJob,
            VariantArg::Js => DdVariant::JobSet,
        },
        cuts,
        symmetry: !solver.no_symmetry,
        relaxation: !solver.no_relaxation,
        time_budget: Duration::from_secs_f64(solver.budget),
        workers: workers.max(1),
        mode: match solver.mode {
            ModeArg::Iterative => LoopMode::Iterative,
            ModeArg::Lazy => LoopMode::Lazy,
        },
        backend,
    })
}

fn external_command(config: Option<&Path>) -> CliResult<Option<String>> {
    let Some(path) = config else {
        return Ok(None);
    };
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).context("config is not valid JSON")?;
    match value.get("external_solver_cmd") {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Failure::config(anyhow!("external_solver_cmd must be a string"))),
    }
}

fn load_instance(path: &Path) -> CliResult<Instance> {
    Instance::load(path)
        .with_context(|| format!("cannot load instance {}", path.display()))
        .map_err(Failure::config)
}

fn solution_json(inst: &Instance, outcome: &SolveOutcome) -> Value {
    let r = &outcome.report;
    let (x, z) = match &outcome.candidate {
        Some(c) => (json!(c.to_matrix(inst.n_machines)), json!(c.z)),
        None => (Value::Null, Value::Null),
    };
    json!({
        "objective": r.objective,
        "bound": r.bound,
        "status": status_name(r.status),
        "x": x,
        "z": z,
    })
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "Optimal",
        SolveStatus::TimeLimit => "Limit",
    }
}

fn cmd_solve(a: &SolveArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let opts = solve_options(&a.solver, a.variant, a.cut, a.flow, a.solver.workers)?;
    let outcome = solve_ccpmsp(&inst, &opts)?;
    if a.header {
        println!("{CSV_VERSION_LINE}");
        println!("{}", ccpmsp::decomposition::SolveReport::csv_header());
    }
    println!("{}", outcome.report.csv_row());
    eprintln!("status {}: {}", status_name(outcome.report.status), outcome.report);
    if let Some(path) = &a.solution {
        let text = serde_json::to_string_pretty(&solution_json(&inst, &outcome)).map_err(anyhow::Error::from)?;
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if outcome.candidate.is_none() {
        return Err(Failure {
            code: 3,
            error: anyhow!("budget exhausted without a feasible schedule"),
        });
    }
    Ok(())
}

/// Assignment matrix, scenario flags and claimed objective of a solution file.
type SolutionFile = (Vec<Vec<u8>>, Vec<bool>, Option<f64>);

fn read_solution(path: &Path) -> CliResult<SolutionFile> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).context("solution is not valid JSON")?;
    let x: Vec<Vec<u8>> = serde_json::from_value(v.get("x").cloned().unwrap_or(Value::Null))
        .context("solution needs an `x` matrix of 0/1 entries")?;
    let z: Vec<bool> = serde_json::from_value(v.get("z").cloned().unwrap_or(Value::Null))
        .context("solution needs a boolean `z` vector")?;
    let objective = v.get("objective").and_then(Value::as_f64);
    Ok((x, z, objective))
}

fn cmd_verify(a: &VerifyArgs) -> CliResult<()> {
    let inst = load_instance(&a.instance)?;
    let (x, z, objective) = read_solution(&a.solution)?;
    let problems = verify_solution(&inst, &x, &z, objective, &OracleLimits::default())?;
    if problems.is_empty() {
        println!("ok");
        return Ok(());
    }
    for p in &problems {
        println!("violation: {p}");
    }
    Err(Failure {
        code: 1,
        error: anyhow!("{} violation(s)", problems.len()),
    })
}

/// One benchmark configuration parsed from `model:cut`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RunSpec {
    variant: VariantArg,
    cut: CutArg,
    flow: FlowArg,
}

fn parse_run(spec: &str) -> CliResult<RunSpec> {
    let bad = || Failure::config(anyhow!("bad run `{spec}`; expected model:cut such as js:iis or mdd:basic"));
    let (model, cut) = spec.trim().split_once(':').ok_or_else(bad)?;
    let model = model.to_ascii_lowercase();
    let cut = CutArg::from_str(cut, true).map_err(|_| bad())?;
    let flow_cut = matches!(cut, CutArg::Basic | CutArg::Strategy1 | CutArg::Strategy2);
    let (variant, flow) = match (model.as_str(), flow_cut) {
        ("lj" | "dd-lj", false) => (VariantArg::Lj, FlowArg::Mdd),
        ("js" | "dd-js", false) => (VariantArg::Js, FlowArg::Mdd),
        ("bdd" | "bdd-cap", true) => (VariantArg::Js, FlowArg::Bdd),
        ("mdd" | "mdd-cap", true) => (VariantArg::Js, FlowArg::Mdd),
        _ => return Err(bad()),
    };
    Ok(RunSpec { variant, cut, flow })
}

fn expand_instances(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Failure::config(anyhow!("no such instance path {}", p.display())));
        }
    }
    if out.is_empty() {
        return Err(Failure::config(anyhow!("no instance files found")));
    }
    Ok(out)
}

fn agg_path(out: &Path) -> PathBuf {
    let stem = out.to_string_lossy();
    let base = stem.strip_suffix(".csv").unwrap_or(&stem);
    PathBuf::from(format!("{base}.agg.csv"))
}

fn file_label(path: &Path) -> String {
    path.file_stem().map_or("?".into(), |s| s.to_string_lossy().replace(',', ";"))
}

fn tag_for(path: &Path, inst: &Instance) -> InstanceTag {
    InstanceTag {
        name: file_label(path),
        dataset: inst.dataset_kind.map_or("na", |k| k.name()).to_string(),
        n_jobs: inst.n_jobs,
        n_machines: inst.n_machines,
        dif: inst.dif,
        seed: inst.seed,
    }
}

fn model_cut_labels(spec: &RunSpec) -> (&'static str, &'static str) {
    let model = match (spec.cut, spec.flow, spec.variant) {
        (CutArg::Nogood | CutArg::Iis, _, VariantArg::Lj) => "DD-LJ",
        (CutArg::Nogood | CutArg::Iis, _, VariantArg::Js) => "DD-JS",
        (_, FlowArg::Bdd, _) => "BDD-CAP",
        (_, FlowArg::Mdd, _) => "MDD-CAP",
    };
    let cut = match spec.cut {
        CutArg::Nogood => "NoGood",
        CutArg::Iis => "IIS",
        CutArg::Basic => "Basic",
        CutArg::Strategy1 => "Strategy1",
        CutArg::Strategy2 => "Strategy2",
    };
    (model, cut)
}

/// Solve, re-verify and format one benchmark row. Failures become rows too.
fn bench_row(tag: &InstanceTag, inst: &Instance, spec: &RunSpec, opts: &SolveOptions) -> String {
    let start = Instant::now();
    match solve_ccpmsp(inst, opts) {
        Ok(outcome) => {
            let verified = outcome.candidate.as_ref().is_some_and(|c| verified(inst, c, outcome.report.objective));
            bench::run_row(tag, &outcome.report, verified)
        }
        Err(e) => {
            let (model, cut) = model_cut_labels(spec);
            bench::error_row(tag, model, cut, start.elapsed().as_secs_f64(), &e.to_string())
        }
    }
}

fn verified(inst: &Instance, cand: &Candidate, objective: Option<f64>) -> bool {
    verify_solution(inst, &cand.to_matrix(inst.n_machines), &cand.z, objective, &OracleLimits::default())
        .is_ok_and(|p| p.is_empty())
}

fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let specs = a.runs.iter().map(|s| parse_run(s)).collect::<CliResult<Vec<_>>>()?;
    let paths = expand_instances(&a.instances)?;
    let workers = if a.parallel > 1 { 1 } else { a.solver.workers };
    let mut jobs = Vec::new();
    for path in &paths {
        // An unreadable file still gets its rows; each one records the error.
        let tag = match Instance::load(path) {
            Ok(inst) => tag_for(path, &inst),
            Err(_) => InstanceTag {
                name: file_label(path),
                dataset: "na".into(),
                n_jobs: 0,
                n_machines: 0,
                dif: None,
                seed: None,
            },
        };
        for spec in &specs {
            let opts = solve_options(&a.solver, spec.variant, spec.cut, spec.flow, workers)?;
            for _ in 0..a.repetitions.max(1) {
                jobs.push((tag.clone(), path.clone(), *spec, opts.clone()));
            }
        }
    }
    // Instances are reloaded per run so concurrent solves share nothing.
    let rows: Vec<Mutex<Option<String>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..a.parallel.clamp(1, jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((tag, path, spec, opts)) = jobs.get(i) else {
                    break;
                };
                let row = match Instance::load(path) {
                    Ok(inst) => bench_row(tag, &inst, spec, opts),
                    Err(e) => {
                        let (model, cut) = model_cut_labels(spec);
                        bench::error_row(tag, model, cut, 0.0, &e.to_string())
                    }
                };
                eprintln!("[{}/{}] {}", i + 1, jobs.len(), row);
                *rows[i].lock().expect("row slot") = Some(row);
            });
        }
    });
    let mut text = format!("{CSV_VERSION_LINE}\n{}\n", bench::run_header());
    for slot in rows {
        text.push_str(&slot.into_inner().expect("row slot").expect("every run finished"));
        text.push('\n');
    }
    fs::write(&a.out, &text).with_context(|| format!("cannot write {}", a.out.display()))?;
    let runs = bench::parse_runs(&text)?;
    let agg = agg_path(&a.out);
    fs::write(&agg, bench::aggregate(&runs)).with_context(|| format!("cannot write {}", agg.display()))?;
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let runs = bench::parse_runs(&text)?;
    let out = a.out.clone().unwrap_or_else(|| agg_path(&a.input));
    fs::write(&out, bench::aggregate(&runs)).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}
