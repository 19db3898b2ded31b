//! The master/subproblem loop.
//!
//! A master candidate fixes an assignment and the scenarios it claims. Each
//! claimed scenario and non-empty machine is checked by a subproblem; failures
//! become cuts. A candidate whose passing scenarios still meet the chance
//! constraint is accepted with the failing scenarios switched off.

use std::collections::HashSet;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dd::{canonical_remap, extract_iis, min_completion_time, DdVariant, DiagramCache, LocalTimes};
use crate::error::{Error, Result};
use crate::master::{
    build_master, BranchAndBound, CandidateHook, ExternalBackend, MasterBackend,
    SolveStatus,
};
use crate::model::{chance_satisfied, Candidate, Cut, CutKind, Instance, TIME_TOL};
use crate::netflow::{benders_cut, build_flow_diagram, capacitated_shortest_path, CutStrategy, FlowDiagram, FlowDiagramKind};

/// Which cuts failing subproblems produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutFamily {
    /// Forbid the whole job set of the failing machine.
    NoGood,
    /// Forbid every minimal infeasible subset of it.
    Iis,
    /// Benders cut from the duals of a capacitated flow diagram.
    Flow {
        diagram: FlowDiagramKind,
        strategy: CutStrategy,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoopMode {
    /// Re-solve the master after each batch of cuts.
    #[default]
    Iterative,
    /// Check candidates from inside the master search.
    Lazy,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum BackendChoice {
    #[default]
    BuiltIn,
    /// External MILP solver; `None` reads the command from the environment.
    External(Option<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    pub variant: DdVariant,
    pub cuts: CutFamily,
    pub symmetry: bool,
    pub relaxation: bool,
    pub time_budget: Duration,
    pub workers: usize,
    pub mode: LoopMode,
    pub backend: BackendChoice,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            variant: DdVariant::JobSet,
            cuts: CutFamily::Iis,
            symmetry: true,
            relaxation: true,
            time_budget: Duration::from_secs(1200),
            workers: 1,
            mode: LoopMode::Iterative,
            backend: BackendChoice::BuiltIn,
        }
    }
}

impl SolveOptions {
    /// Label of the subproblem model used in reports.
    pub fn model_label(&self) -> &'static str {
        match self.cuts {
            CutFamily::Flow { diagram, .. } => diagram.name(),
            _ => self.variant.name(),
        }
    }

    pub fn cut_label(&self) -> &'static str {
        match self.cuts {
            CutFamily::NoGood => "NoGood",
            CutFamily::Iis => "IIS",
            CutFamily::Flow { strategy, .. } => strategy.name(),
        }
    }
}

/// A machine that cannot finish within the limit in a claimed scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineFailure {
    pub scenario: usize,
    pub machine: usize,
    pub jobs: Vec<usize>,
    pub time: f64,
}

/// Subproblem machinery shared by every check of one solve.
pub struct Subproblems<'a> {
    inst: &'a Instance,
    variant: DdVariant,
    family: CutFamily,
    cache: DiagramCache,
    flow: Option<FlowDiagram>,
    pool: Option<rayon::ThreadPool>,
    /// Time spent building diagrams.
    pub creation_time: Duration,
    /// Time spent evaluating subproblems.
    pub resolution_time: Duration,
    /// Time spent turning failures into cuts.
    pub cut_time: Duration,
    /// Checks performed per machine and scenario, `[machine][scenario]`.
    pub checks: Vec<Vec<u32>>,
}

impl<'a> Subproblems<'a> {
    pub fn new(inst: &'a Instance, variant: DdVariant, family: CutFamily, workers: usize) -> Result<Self> {
        let start = Instant::now();
        let flow = match family {
            CutFamily::Flow { diagram, .. } => Some(build_flow_diagram(diagram, inst.n_jobs)?),
            _ => None,
        };
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Subproblems {
            inst,
            variant,
            family,
            cache: DiagramCache::new(inst.capacity),
            flow,
            pool,
            creation_time: start.elapsed(),
            resolution_time: Duration::ZERO,
            cut_time: Duration::ZERO,
            checks: vec![vec![0; inst.n_scenarios()]; inst.n_machines],
        })
    }

    fn column(&self, jobs: &[usize]) -> Vec<bool> {
        let mut col = vec![false; self.inst.n_jobs];
        for &j in jobs {
            col[j] = true;
        }
        col
    }

    fn machine_time(&self, scenario: usize, jobs: &[usize]) -> Result<f64> {
        let s = &self.inst.scenarios[scenario];
        match &self.flow {
            Some(d) => Ok(capacitated_shortest_path(d, &self.column(jobs), s)?.cost),
            None => {
                let d = self.cache.get(self.variant, jobs.len())?;
                let times = LocalTimes::new(s, &canonical_remap(jobs)?);
                min_completion_time(&d, &times)
            }
        }
    }

    /// Make sure every diagram size a candidate needs is built, timing it.
    fn prepare(&mut self, sizes: impl Iterator<Item = usize>) -> Result<()> {
        if self.flow.is_some() {
            return Ok(());
        }
        let start = Instant::now();
        for k in sizes {
            self.cache.get(self.variant, k)?;
        }
        self.creation_time += start.elapsed();
        Ok(())
    }

    /// Every failing (scenario, machine) pair of the candidate, ordered by
    /// scenario then machine.
    pub fn check_candidate(&mut self, cand: &Candidate) -> Result<Vec<MachineFailure>> {
        let machines: Vec<Vec<usize>> = (0..self.inst.n_machines).map(|m| cand.jobs_on(m)).collect();
        if machines.iter().any(|jobs| jobs.len() > self.inst.capacity) {
            return Err(Error::Contract("candidate exceeds machine capacity".into()));
        }
        self.prepare(machines.iter().map(Vec::len).filter(|&k| k > 0))?;
        let pairs: Vec<(usize, usize)> = (0..self.inst.n_scenarios())
            .filter(|&w| cand.z[w])
            .flat_map(|w| (0..machines.len()).filter(|&m| !machines[m].is_empty()).map(move |m| (w, m)))
            .collect();
        for &(w, m) in &pairs {
            self.checks[m][w] += 1;
        }
        let start = Instant::now();
        let eval = |&(w, m): &(usize, usize)| -> Result<Option<MachineFailure>> {
            let time = self.machine_time(w, &machines[m])?;
            Ok((time > self.inst.time_limit + TIME_TOL).then(|| MachineFailure {
                scenario: w,
                machine: m,
                jobs: machines[m].clone(),
                time,
            }))
        };
        let results: Vec<Result<Option<MachineFailure>>> = match &self.pool {
            Some(pool) => pool.install(|| pairs.par_iter().map(eval).collect()),
            None => pairs.iter().map(eval).collect(),
        };
        self.resolution_time += start.elapsed();
        results.into_iter().filter_map(|r| r.transpose()).collect()
    }

    /// Cuts for a batch of failures, ordered by scenario, machine, job set.
    pub fn emit_cuts(&mut self, failures: &[MachineFailure]) -> Result<Vec<Cut>> {
        let start = Instant::now();
        let mut cuts = Vec::new();
        for f in failures {
            let s = &self.inst.scenarios[f.scenario];
            match self.family {
                CutFamily::NoGood => {
                    cuts.push(Cut::combinatorial(CutKind::NoGood, f.scenario, f.jobs.clone()));
                }
                CutFamily::Iis => {
                    let d = self.cache.get(self.variant, f.jobs.len())?;
                    let remap = canonical_remap(&f.jobs)?;
                    let sets = extract_iis(&d, &LocalTimes::new(s, &remap), self.inst.time_limit)?;
                    if sets.is_empty() {
                        return Err(Error::Contract(format!(
                            "failing machine {} in scenario {} yields no infeasible subset",
                            f.machine + 1,
                            f.scenario + 1
                        )));
                    }
                    for set in sets {
                        cuts.push(Cut::combinatorial(CutKind::Iis, f.scenario, remap.to_original(set)));
                    }
                }
                CutFamily::Flow { strategy, .. } => {
                    let d = self.flow.as_ref().expect("flow diagram built for flow cuts");
                    cuts.push(benders_cut(
                        d,
                        &self.column(&f.jobs),
                        s,
                        f.scenario,
                        strategy,
                        self.inst.capacity,
                        self.inst.time_limit,
                        self.inst.big_m_max(),
                    )?);
                }
            }
        }
        self.cut_time += start.elapsed();
        Ok(cuts)
    }
}

/// Statistics of one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub model: String,
    pub cut: String,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: f64,
    pub gap: f64,
    pub n_callbacks: usize,
    pub n_cuts: usize,
    pub iterations: usize,
    pub master_nodes: u64,
    /// Seconds spent evaluating subproblems.
    pub resolution_time: f64,
    pub resolution_time_per_callback: f64,
    pub cut_creation_time: f64,
    pub subproblem_creation_time: f64,
    pub master_time: f64,
    pub wall_time: f64,
    /// `[machine][scenario]` subproblem checks.
    pub checks: Vec<Vec<u32>>,
}

/// Header line of the result CSV format.
pub const CSV_VERSION_LINE: &str = "# ccpmsp-csv v1";

/// Columns of one result row.
pub const CSV_COLUMNS: [&str; 11] = [
    "model",
    "cut",
    "total_time",
    "gap",
    "optimal",
    "n_callbacks",
    "n_cuts",
    "resol_time",
    "resol_time_per_cb",
    "create_cut_time",
    "create_sp_time",
];

/// Columns holding wall-clock measurements.
pub const CSV_TIME_COLUMNS: [&str; 5] = [
    "total_time",
    "resol_time",
    "resol_time_per_cb",
    "create_cut_time",
    "create_sp_time",
];

pub fn format_gap(gap: f64) -> String {
    if gap.is_infinite() {
        "inf".into()
    } else {
        format!("{gap:.6}")
    }
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.cut.clone(),
            format!("{:.6}", self.wall_time),
            format_gap(self.gap),
            u8::from(self.is_optimal()).to_string(),
            self.n_callbacks.to_string(),
            self.n_cuts.to_string(),
            format!("{:.6}", self.resolution_time),
            format!("{:.6}", self.resolution_time_per_callback),
            format!("{:.6}", self.cut_creation_time),
            format!("{:.6}", self.subproblem_creation_time),
        ]
    }

    pub fn csv_row(&self) -> String {
        self.csv_fields().join(",")
    }
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let obj = self.objective.map_or("none".to_string(), |o| o.to_string());
        write!(
            f,
            "{} {} objective={obj} bound={} gap={} callbacks={} cuts={} time={:.3}s",
            self.model,
            self.cut,
            self.bound,
            format_gap(self.gap),
            self.n_callbacks,
            self.n_cuts,
            self.wall_time
        )
    }
}

/// Best schedule found and the run statistics.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub candidate: Option<Candidate>,
    pub report: SolveReport,
}

/// Relative gap; infinite without an incumbent.
pub fn relative_gap(objective: Option<f64>, bound: f64) -> f64 {
    match objective {
        None => f64::INFINITY,
        Some(o) if o.abs() < 1e-12 => {
            if bound <= 1e-9 {
                0.0
            } else {
                f64::INFINITY
            }
        }
        Some(o) => ((bound - o) / o).max(0.0),
    }
}

struct LazyChecker<'s, 'a> {
    sp: &'s mut Subproblems<'a>,
    callbacks: usize,
}

impl CandidateHook for LazyChecker<'_, '_> {
    fn on_candidate(&mut self, cand: &Candidate) -> Result<Vec<Cut>> {
        self.callbacks += 1;
        let failures = self.sp.check_candidate(cand)?;
        self.sp.emit_cuts(&failures)
    }
}

fn make_backend(choice: &BackendChoice) -> Result<Box<dyn MasterBackend>> {
    Ok(match choice {
        BackendChoice::BuiltIn => Box::new(BranchAndBound::new()),
        BackendChoice::External(cmd) => Box::new(ExternalBackend::from_config(cmd.as_deref())?),
    })
}

/// Solve an instance by decomposition.
pub fn solve_ccpmsp(inst: &Instance, opts: &SolveOptions) -> Result<SolveOutcome> {
    let start = Instant::now();
    let deadline = start + opts.time_budget;
    let mut backend = make_backend(&opts.backend)?;
    let mut model = build_master(inst, opts.symmetry, opts.relaxation);
    let mut sp = Subproblems::new(inst, opts.variant, opts.cuts, opts.workers)?;
    let mut master_time = Duration::ZERO;
    let mut n_callbacks = 0;
    let mut iterations = 0;
    let mut nodes = 0;

    let mut lazy_result = None;
    if opts.mode == LoopMode::Lazy {
        let t = Instant::now();
        let mut hook = LazyChecker { sp: &mut sp, callbacks: 0 };
        let res = backend.solve_lazy(&mut model, deadline, &mut hook)?;
        n_callbacks += hook.callbacks;
        master_time += t.elapsed();
        lazy_result = res;
    }

    let (candidate, objective, bound, status) = if let Some(sol) = lazy_result {
        iterations = 1;
        nodes = sol.nodes;
        let objective = sol.candidate.as_ref().map(|_| sol.objective);
        (sol.candidate, objective, sol.bound, sol.status)
    } else {
        let mut seen: HashSet<Candidate> = HashSet::new();
        loop {
            iterations += 1;
            let t = Instant::now();
            let sol = backend.solve(&model, deadline)?;
            master_time += t.elapsed();
            nodes += sol.nodes;
            let Some(cand) = sol.candidate.clone() else {
                break (None, None, sol.bound, SolveStatus::TimeLimit);
            };
            if !seen.insert(cand.clone()) {
                return Err(Error::NoProgress(format!(
                    "candidate repeated after {} iterations",
                    iterations
                )));
            }
            n_callbacks += 1;
            let failures = sp.check_candidate(&cand)?;
            let mut z = cand.z.clone();
            for f in &failures {
                z[f.scenario] = false;
            }
            if chance_satisfied(inst, &z) {
                let accepted = Candidate {
                    assignment: cand.assignment,
                    z,
                };
                let objective = sol.objective;
                break (Some(accepted), Some(objective), sol.bound, sol.status);
            }
            if sol.status == SolveStatus::TimeLimit || Instant::now() >= deadline {
                break (None, None, sol.bound, SolveStatus::TimeLimit);
            }
            let cuts = sp.emit_cuts(&failures)?;
            if model.add_cuts(cuts).is_empty() {
                return Err(Error::NoProgress(
                    "failing candidate produced only known cuts".into(),
                ));
            }
        }
    };

    let secs = |d: Duration| d.as_secs_f64();
    let report = SolveReport {
        model: opts.model_label().to_string(),
        cut: opts.cut_label().to_string(),
        status,
        objective,
        bound,
        gap: relative_gap(objective, bound),
        n_callbacks,
        n_cuts: model.cuts().len(),
        iterations,
        master_nodes: nodes,
        resolution_time: secs(sp.resolution_time),
        resolution_time_per_callback: if n_callbacks > 0 {
            secs(sp.resolution_time) / n_callbacks as f64
        } else {
            0.0
        },
        cut_creation_time: secs(sp.cut_time),
        subproblem_creation_time: secs(sp.creation_time),
        master_time: secs(master_time),
        wall_time: secs(start.elapsed()),
        checks: sp.checks.clone(),
    };
    Ok(SolveOutcome { candidate, report })
}
