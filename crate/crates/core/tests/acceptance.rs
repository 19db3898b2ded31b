//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Set
//! `CCPMSP_ACCEPTANCE=1,5` to run a subset.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ccpmsp::dd::job_set::js_arc_costs;
use ccpmsp::dd::{
    build_diagram, canonical_remap, extract_iis, js_iis, lj_iis, lj_node_times, min_completion_time, DdVariant,
    LocalTimes,
};
use ccpmsp::decomposition::{solve_ccpmsp, CutFamily, LoopMode, SolveOptions, Subproblems, CSV_COLUMNS, CSV_TIME_COLUMNS};
use ccpmsp::generate::{make_instance, GenConfig};
use ccpmsp::master::{build_master, symmetry_violations};
use ccpmsp::model::{chance_satisfied, DatasetKind};
use ccpmsp::netflow::{CutStrategy, FlowDiagramKind};
use ccpmsp::oracle::{brute_iis, brute_min_time, brute_optimal, OracleLimits};
use ccpmsp::{Candidate, Cut, Instance, JobMask, Scenario};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Absolute tolerance on completion times and objectives.
const TIME_EPS: f64 = 1e-9;
const WORKED_RUNTIME: Duration = Duration::from_secs(1);
const SEQ_RUNTIME: Duration = Duration::from_secs(30);
const IIS_RUNTIME: Duration = Duration::from_secs(60);
const E2E_RUNTIME: Duration = Duration::from_secs(600);
const SWEEP_RUNTIME: Duration = Duration::from_secs(300);
const MEDIUM_BUDGET: Duration = Duration::from_secs(60);
/// Repetitions per decision-diagram run in the trend check; the fastest counts.
const TREND_REPEATS: usize = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS
}

/// Execution times (2, 6, 3) with every setup equal to one.
fn worked_scenario() -> Scenario {
    let mut setup = vec![vec![1.0; 4]; 4];
    for (i, row) in setup.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    Scenario { exec: vec![2.0, 6.0, 3.0], setup }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let s = worked_scenario();
    let times = LocalTimes::new(&s, &canonical_remap(&[0, 1, 2]).unwrap());
    let want_iis = vec![JobMask::from_jobs([1]), JobMask::from_jobs([0, 2])];
    let mut problems = Vec::new();

    let lj = build_diagram(DdVariant::LastJob, 3).unwrap();
    let node_time = lj_node_times(&lj, &times);
    let lj_layer = |p: usize| sorted(lj.layer(p).map(|i| node_time[i]).collect());
    if lj_layer(1) != sorted(vec![2.0, 6.0, 3.0]) {
        problems.push(format!("LJ layer 1 {:?}", lj_layer(1)));
    }
    if lj_layer(2) != sorted(vec![9.0, 6.0, 9.0, 10.0, 6.0, 10.0]) {
        problems.push(format!("LJ layer 2 {:?}", lj_layer(2)));
    }
    if !close(node_time[lj.terminal()], 14.0) {
        problems.push(format!("LJ terminal {}", node_time[lj.terminal()]));
    }
    if lj_iis(&lj, &times, 5.0) != want_iis {
        problems.push("LJ IIS".into());
    }

    let js = build_diagram(DdVariant::JobSet, 3).unwrap();
    let memo = js_arc_costs(&js, &times);
    let js_layer = |p: usize| -> Vec<f64> {
        sorted(js.layer(p).flat_map(|n| js.nodes()[n].in_arcs.iter().map(|&a| memo[a])).collect())
    };
    if js_layer(1) != sorted(vec![2.0, 6.0, 3.0]) {
        problems.push(format!("JS layer 1 {:?}", js_layer(1)));
    }
    if js_layer(2) != sorted(vec![9.0, 6.0, 9.0, 10.0, 6.0, 10.0]) {
        problems.push(format!("JS layer 2 {:?}", js_layer(2)));
    }
    let js_total = min_completion_time(&js, &times).unwrap();
    if !close(js_total, 14.0) {
        problems.push(format!("JS terminal {js_total}"));
    }
    if js_iis(&js, &times, 5.0, true) != want_iis {
        problems.push("JS IIS".into());
    }
    let elapsed = start.elapsed();
    if elapsed >= WORKED_RUNTIME {
        problems.push(format!("took {elapsed:?}"));
    }
    verdict(problems.is_empty(), if problems.is_empty() { "time 14, IIS {2},{1,3}".into() } else { problems.join("; ") })
}

/// A few generated instances of each dataset kind, used as a pool of scenarios.
fn scenario_pool(n_jobs: usize) -> Vec<Scenario> {
    let mut pool = Vec::new();
    for (i, kind) in DatasetKind::ALL.into_iter().enumerate() {
        for (k, dif) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
            let mut cfg = GenConfig::new(kind, n_jobs, 1, dif, 1000 + (i * 3 + k) as u64);
            cfg.n_scenarios = 20;
            pool.extend(make_instance(&cfg).unwrap().scenarios);
        }
    }
    pool
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut jobs = sample(rng, n, k).into_vec();
    jobs.sort_unstable();
    jobs
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let pool = scenario_pool(12);
    let limits = OracleLimits::default();
    let lj: Vec<_> = (1..=7).map(|k| build_diagram(DdVariant::LastJob, k).unwrap()).collect();
    let js: Vec<_> = (1..=7).map(|k| build_diagram(DdVariant::JobSet, k).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let s = &pool[rng.random_range(0..pool.len())];
        let k = rng.random_range(1..=7);
        let jobs = random_subset(&mut rng, 12, k);
        let times = LocalTimes::new(s, &canonical_remap(&jobs).unwrap());
        let brute = brute_min_time(&jobs, s, true, &limits).unwrap();
        for d in [&lj[k - 1], &js[k - 1]] {
            worst = worst.max((min_completion_time(d, &times).unwrap() - brute).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= TIME_EPS && elapsed < SEQ_RUNTIME,
        format!("1000 cases, max deviation {worst:e}, {elapsed:.1?}"),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let pool = scenario_pool(10);
    let limits = OracleLimits::default();
    let lj: Vec<_> = (1..=6).map(|k| build_diagram(DdVariant::LastJob, k).unwrap()).collect();
    let js: Vec<_> = (1..=6).map(|k| build_diagram(DdVariant::JobSet, k).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut nonempty = 0;
    for _ in 0..500 {
        let s = &pool[rng.random_range(0..pool.len())];
        let k = rng.random_range(1..=6);
        let jobs = random_subset(&mut rng, 10, k);
        let remap = canonical_remap(&jobs).unwrap();
        let times = LocalTimes::new(s, &remap);
        let full = brute_min_time(&jobs, s, true, &limits).unwrap();
        let limit = full * rng.random_range(0.3..1.1);
        let family = |sets: Vec<JobMask>| -> BTreeSet<Vec<usize>> {
            sets.into_iter().map(|m| remap.to_original(m)).collect()
        };
        let a = family(extract_iis(&lj[k - 1], &times, limit).unwrap());
        let b = family(extract_iis(&js[k - 1], &times, limit).unwrap());
        let c: BTreeSet<Vec<usize>> = brute_iis(&jobs, s, limit, &limits).unwrap().into_iter().collect();
        if !c.is_empty() {
            nonempty += 1;
        }
        if a != c || b != c {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < IIS_RUNTIME,
        format!("500 cases ({nonempty} infeasible), {mismatches} mismatches, {elapsed:.1?}"),
    )
}

/// The tiny regression set: at most 8 jobs, 3 machines and 10 scenarios.
fn tiny_set(count: usize, seed: u64, max_jobs: usize, max_machines: usize, max_scenarios: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let kind = DatasetKind::ALL[i % 3];
            let jobs = rng.random_range(3..=max_jobs);
            let machines = rng.random_range(1..=max_machines.min(jobs));
            let dif = [-1.0, 0.0, 0.5, 1.0][rng.random_range(0..4)];
            let mut cfg = GenConfig::new(kind, jobs, machines, dif, rng.random());
            cfg.n_scenarios = rng.random_range(2..=max_scenarios);
            cfg.epsilon = [0.1, 0.2, 0.3][rng.random_range(0..3)];
            cfg.capacity = Some(jobs.div_ceil(machines));
            make_instance(&cfg).unwrap()
        })
        .collect()
}

fn regression_set() -> Vec<Instance> {
    tiny_set(100, 4, 8, 3, 10)
}

fn criterion_4(set: &[Instance], optima: &[f64]) -> Verdict {
    let start = Instant::now();
    let mut wrong = Vec::new();
    let mut with_cuts = 0;
    let configs = [
        (DdVariant::LastJob, CutFamily::NoGood),
        (DdVariant::LastJob, CutFamily::Iis),
        (DdVariant::JobSet, CutFamily::NoGood),
        (DdVariant::JobSet, CutFamily::Iis),
    ];
    for (i, inst) in set.iter().enumerate() {
        for (variant, cuts) in configs {
            let opts = SolveOptions { variant, cuts, time_budget: E2E_RUNTIME, ..SolveOptions::default() };
            let out = solve_ccpmsp(inst, &opts).unwrap();
            let ok = out.report.is_optimal() && out.report.objective.is_some_and(|o| close(o, optima[i]));
            with_cuts += usize::from(out.report.n_cuts > 0);
            if !ok {
                wrong.push(format!("#{i} {} {}", opts.model_label(), opts.cut_label()));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        wrong.is_empty() && elapsed < E2E_RUNTIME,
        format!(
            "400 runs ({with_cuts} needed cuts), {} wrong {:?}, {elapsed:.1?}",
            wrong.len(),
            wrong.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn criterion_5() -> Verdict {
    let mut problems = Vec::new();
    for k in 1..=10 {
        for variant in [DdVariant::LastJob, DdVariant::JobSet] {
            let d = build_diagram(variant, k).unwrap();
            let mut want: Vec<usize> = (1..=k)
                .map(|p| match variant {
                    DdVariant::LastJob => binomial(k, p - 1) * (p - 1).max(1),
                    DdVariant::JobSet => binomial(k, p - 1),
                })
                .collect();
            want.push(1);
            if d.layer_sizes() != want {
                problems.push(format!("{} k={k}: {:?}", variant.name(), d.layer_sizes()));
            }
        }
    }
    let lj3 = build_diagram(DdVariant::LastJob, 3).unwrap().layer_sizes();
    let js3 = build_diagram(DdVariant::JobSet, 3).unwrap().layer_sizes();
    if lj3 != [1, 3, 6, 1] || js3 != [1, 3, 3, 1] {
        problems.push(format!("k=3 shapes {lj3:?} {js3:?}"));
    }
    verdict(problems.is_empty(), if problems.is_empty() { "k = 1..10 closed forms".into() } else { problems.join("; ") })
}

/// Every assignment of jobs to machines (or none) within capacity.
fn assignments(inst: &Instance) -> Vec<Vec<Option<usize>>> {
    let base = inst.n_machines + 1;
    let total = base.pow(inst.n_jobs as u32);
    (0..total)
        .filter_map(|mut code| {
            let mut a = Vec::with_capacity(inst.n_jobs);
            for _ in 0..inst.n_jobs {
                a.push((code % base).checked_sub(1));
                code /= base;
            }
            let fits = (0..inst.n_machines).all(|m| a.iter().filter(|x| **x == Some(m)).count() <= inst.capacity);
            fits.then_some(a)
        })
        .collect()
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let set = tiny_set(50, 6, 6, 2, 5);
    let limits = OracleLimits::default();
    let families = [
        (DdVariant::JobSet, CutFamily::NoGood),
        (DdVariant::LastJob, CutFamily::Iis),
        (DdVariant::JobSet, CutFamily::Iis),
        (DdVariant::JobSet, CutFamily::Flow { diagram: FlowDiagramKind::Bdd, strategy: CutStrategy::Basic }),
        (DdVariant::JobSet, CutFamily::Flow { diagram: FlowDiagramKind::Bdd, strategy: CutStrategy::LayerMin }),
        (DdVariant::JobSet, CutFamily::Flow { diagram: FlowDiagramKind::Mdd, strategy: CutStrategy::Basic }),
        (DdVariant::JobSet, CutFamily::Flow { diagram: FlowDiagramKind::Mdd, strategy: CutStrategy::LayerMin }),
    ];
    let (mut n_cuts, mut n_points, mut violations) = (0usize, 0usize, Vec::new());
    for (i, inst) in set.iter().enumerate() {
        let all = assignments(inst);
        // Emit every cut any candidate with all scenarios claimed can produce.
        let mut cuts: Vec<Cut> = Vec::new();
        for (variant, family) in families {
            let mut sp = Subproblems::new(inst, variant, family, 1).unwrap();
            for a in &all {
                let cand = Candidate { assignment: a.clone(), z: vec![true; inst.n_scenarios()] };
                let failures = sp.check_candidate(&cand).unwrap();
                cuts.extend(sp.emit_cuts(&failures).unwrap());
            }
        }
        n_cuts += cuts.len();
        for a in &all {
            let cand = Candidate { assignment: a.clone(), z: vec![false; 0] };
            let feasible_in: Vec<bool> = inst
                .scenarios
                .iter()
                .map(|s| {
                    (0..inst.n_machines).all(|m| {
                        let jobs = cand.jobs_on(m);
                        brute_min_time(&jobs, s, true, &limits).unwrap() <= inst.time_limit + TIME_EPS
                    })
                })
                .collect();
            // Every chance-feasible scenario selection supported by this assignment.
            let n = inst.n_scenarios();
            for zmask in 0u32..1 << n {
                let z: Vec<bool> = (0..n).map(|w| zmask >> w & 1 == 1).collect();
                if z.iter().zip(&feasible_in).any(|(&zw, &ok)| zw && !ok) || !chance_satisfied(inst, &z) {
                    continue;
                }
                n_points += 1;
                let point = Candidate { assignment: a.clone(), z };
                for cut in &cuts {
                    if !cut.satisfied_by(&point, inst.n_machines, inst.time_limit) {
                        violations.push(format!("#{i} {:?} {:?}", cut.kind, point.assignment));
                    }
                    // With the scenario dropped the row must be slack.
                    if let Some(t) = &cut.benders {
                        if !point.z[cut.scenario] {
                            for m in 0..inst.n_machines {
                                let col: Vec<bool> = point.assignment.iter().map(|x| *x == Some(m)).collect();
                                if t.lhs(&col) - t.big_m > inst.time_limit + TIME_EPS {
                                    violations.push(format!("#{i} big-M too small"));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        violations.is_empty() && elapsed < SWEEP_RUNTIME,
        format!(
            "{n_cuts} cuts against {n_points} feasible points, {} violations {:?}, {elapsed:.1?}",
            violations.len(),
            violations.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7(set: &[Instance], optima: &[f64]) -> Verdict {
    let mut problems = Vec::new();
    for (i, inst) in set.iter().enumerate() {
        for symmetry in [true, false] {
            let opts = SolveOptions { symmetry, time_budget: E2E_RUNTIME, ..SolveOptions::default() };
            let out = solve_ccpmsp(inst, &opts).unwrap();
            if !out.report.objective.is_some_and(|o| close(o, optima[i])) {
                problems.push(format!("#{i} symmetry={symmetry}"));
            }
        }
    }
    let x1: Vec<Vec<u8>> = vec![vec![1, 0, 0], vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1], vec![0, 1, 0]];
    let x2: Vec<Vec<u8>> = vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 0, 1], vec![1, 0, 0], vec![0, 1, 0]];
    let mut cfg = GenConfig::new(DatasetKind::Ors, 5, 3, 0.0, 1);
    cfg.n_scenarios = 2;
    cfg.capacity = Some(2);
    let inst = make_instance(&cfg).unwrap();
    let model = build_master(&inst, true, false);
    let sym_rows = |x: &[Vec<u8>]| -> Vec<String> {
        let cand = Candidate::from_matrix(x, vec![true; 2]).unwrap();
        model.violated_rows(&cand).into_iter().filter(|r| r.starts_with("sym")).collect()
    };
    if !sym_rows(&x1).is_empty() || !symmetry_violations(&x1).is_empty() {
        problems.push("x1 rejected".into());
    }
    let v2 = symmetry_violations(&x2);
    if sym_rows(&x2).is_empty() || !v2.contains(&("fix", 1, 3)) || !v2.contains(&("order", 2, 2)) {
        problems.push(format!("x2 not rejected as expected: {v2:?}"));
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() { "200 runs agree; x2 breaks fix (1,3) and order (2,2)".into() } else { problems.join("; ") },
    )
}

/// The medium set: 12 and 14 jobs on 2 or 3 machines, 20 scenarios.
fn medium_set() -> Vec<Instance> {
    let sizes = [(12, 2, 6), (12, 3, 4), (14, 2, 7), (14, 3, 5)];
    (0..20)
        .map(|i| {
            let (jobs, machines, capacity) = sizes[i % 4];
            let kind = DatasetKind::ALL[i % 3];
            let dif = [-1.0, 0.0, 1.0][(i / 4) % 3];
            let mut cfg = GenConfig::new(kind, jobs, machines, dif, 800 + i as u64);
            cfg.n_scenarios = 20;
            cfg.capacity = Some(capacity);
            make_instance(&cfg).unwrap()
        })
        .collect()
}

fn criterion_8() -> Verdict {
    let set = medium_set();
    let run = |inst: &Instance, variant: DdVariant, cuts: CutFamily| {
        let opts = SolveOptions { variant, cuts, time_budget: MEDIUM_BUDGET, mode: LoopMode::Lazy, ..SolveOptions::default() };
        solve_ccpmsp(inst, &opts).map(|o| o.report)
    };
    let flow = CutFamily::Flow { diagram: FlowDiagramKind::Mdd, strategy: CutStrategy::Basic };
    let (mut lj_time, mut js_time) = (0.0, 0.0);
    let (mut lj_opt, mut js_opt, mut flow_opt) = (0, 0, 0);
    for inst in &set {
        for (variant, time, opt) in [
            (DdVariant::LastJob, &mut lj_time, &mut lj_opt),
            (DdVariant::JobSet, &mut js_time, &mut js_opt),
        ] {
            let reports: Vec<_> = (0..TREND_REPEATS).map(|_| run(inst, variant, CutFamily::Iis).unwrap()).collect();
            *time += reports.iter().map(|r| r.wall_time).fold(f64::INFINITY, f64::min);
            *opt += usize::from(reports[0].is_optimal());
        }
        // Diagrams too large for the flow model count as unsolved.
        if run(inst, DdVariant::JobSet, flow).is_ok_and(|r| r.is_optimal()) {
            flow_opt += 1;
        }
    }
    let n = set.len() as f64;
    let (lj_mean, js_mean) = (lj_time / n, js_time / n);
    verdict(
        js_mean <= lj_mean && lj_opt >= flow_opt && js_opt >= flow_opt,
        format!(
            "mean time JS {js_mean:.4}s vs LJ {lj_mean:.4}s; optimal LJ {lj_opt}, JS {js_opt}, MDD-CAP {flow_opt} of 20"
        ),
    )
}

fn criterion_9() -> Verdict {
    let mut cfg = GenConfig::new(DatasetKind::Vrp, 8, 2, -1.0, 99);
    cfg.n_scenarios = 10;
    cfg.epsilon = 0.2;
    let a = make_instance(&cfg).unwrap();
    let b = make_instance(&cfg).unwrap();
    let same_file = a.to_json().unwrap() == b.to_json().unwrap();
    let timing: Vec<usize> = CSV_TIME_COLUMNS
        .iter()
        .map(|c| CSV_COLUMNS.iter().position(|x| x == c).unwrap())
        .collect();
    let mut same_rows = true;
    for cuts in [CutFamily::Iis, CutFamily::Flow { diagram: FlowDiagramKind::Mdd, strategy: CutStrategy::LayerMin }] {
        let opts = SolveOptions { cuts, ..SolveOptions::default() };
        let rows: Vec<Vec<String>> = [&a, &b]
            .iter()
            .map(|inst| {
                let fields = solve_ccpmsp(inst, &opts).unwrap().report.csv_fields();
                fields.into_iter().enumerate().filter(|(i, _)| !timing.contains(i)).map(|(_, f)| f).collect()
            })
            .collect();
        same_rows &= rows[0] == rows[1];
    }
    verdict(same_file && same_rows, format!("identical files: {same_file}, identical rows: {same_rows}"))
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<u32>> = std::env::var("CCPMSP_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |n: u32| only.as_ref().is_none_or(|s| s.contains(&n));

    let needs_regression = wanted(4) || wanted(7);
    let (set, optima) = if needs_regression {
        let set = regression_set();
        let optima: Vec<f64> = set.iter().map(|inst| brute_optimal(inst, &OracleLimits::default()).unwrap().1).collect();
        (set, optima)
    } else {
        (Vec::new(), Vec::new())
    };

    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let criteria: Vec<(u32, &str, Check)> = vec![
        (1, "worked example", Box::new(criterion_1)),
        (2, "sequencing oracle", Box::new(criterion_2)),
        (3, "IIS oracle", Box::new(criterion_3)),
        (4, "end-to-end optimality", Box::new(|| criterion_4(&set, &optima))),
        (5, "diagram layer sizes", Box::new(criterion_5)),
        (6, "cut validity sweep", Box::new(criterion_6)),
        (7, "symmetry rows", Box::new(|| criterion_7(&set, &optima))),
        (8, "trend on medium set", Box::new(criterion_8)),
        (9, "determinism", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (n, name, check) in &criteria {
        if !wanted(*n) {
            continue;
        }
        let v = check();
        println!("{} criterion {n} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
