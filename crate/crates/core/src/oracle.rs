//! Exhaustive reference solvers, independent of the diagram code.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Candidate, Instance, Scenario, TIME_TOL};

/// Size limits for the exhaustive searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    /// Longest job sequence enumerated by permutation.
    pub max_seq_jobs: usize,
    /// Largest `jobs * machines` product enumerated for whole instances.
    pub max_enum_bits: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_seq_jobs: 8,
            max_enum_bits: 24,
        }
    }
}

fn order_time(order: &[usize], scenario: &Scenario, closing: bool, cutoff: f64) -> f64 {
    let mut total = 0.0;
    for (pos, &j) in order.iter().enumerate() {
        if pos > 0 {
            total += scenario.setup_time(order[pos - 1], j);
        }
        total += scenario.exec_time(j);
        if total >= cutoff {
            return f64::INFINITY;
        }
    }
    if closing {
        if let Some(&last) = order.last() {
            total += scenario.closing_time(last);
        }
    }
    total
}

/// Shortest processing time of `jobs` over all orders. Permutations are
/// generated in Heap's order; a permutation is abandoned once its running
/// time reaches the best found so far.
pub fn brute_min_time(
    jobs: &[usize],
    scenario: &Scenario,
    closing: bool,
    limits: &OracleLimits,
) -> Result<f64> {
    let k = jobs.len();
    if k > limits.max_seq_jobs {
        return Err(Error::OracleLimit(format!(
            "{k} jobs exceed the sequence limit of {}",
            limits.max_seq_jobs
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let mut perm = jobs.to_vec();
    let mut best = order_time(&perm, scenario, closing, f64::INFINITY);
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(order_time(&perm, scenario, closing, best));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// All minimal infeasible subsets of `universe`, each sorted, ordered by size
/// then lexicographically. Proper subsets are timed without the closing
/// setup; the full universe is timed with it.
pub fn brute_iis(
    universe: &[usize],
    scenario: &Scenario,
    time_limit: f64,
    limits: &OracleLimits,
) -> Result<Vec<Vec<usize>>> {
    let k = universe.len();
    if k > limits.max_seq_jobs {
        return Err(Error::OracleLimit(format!(
            "{k} jobs exceed the sequence limit of {}",
            limits.max_seq_jobs
        )));
    }
    let full = (1u32 << k) - 1;
    let subset = |mask: u32| -> Vec<usize> {
        (0..k).filter(|&i| mask >> i & 1 == 1).map(|i| universe[i]).collect()
    };
    let mut infeasible = vec![false; 1 << k];
    for mask in 1..=full {
        let t = brute_min_time(&subset(mask), scenario, mask == full, limits)?;
        infeasible[mask as usize] = t > time_limit + TIME_TOL;
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    for mask in 1..=full {
        if !infeasible[mask as usize] {
            continue;
        }
        // every non-empty proper subset must be feasible
        let mut sub = (mask - 1) & mask;
        let mut minimal = true;
        while sub > 0 {
            if infeasible[sub as usize] {
                minimal = false;
                break;
            }
            sub = (sub - 1) & mask;
        }
        if minimal {
            let mut s = subset(mask);
            s.sort_unstable();
            out.push(s);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// Optimal schedule by enumerating every assignment. A scenario counts as
/// satisfied when every machine finishes within the limit. Among optimal
/// assignments the first one in enumeration order is returned, where job 1
/// varies slowest and "unassigned" precedes machine 1.
pub fn brute_optimal(inst: &Instance, limits: &OracleLimits) -> Result<(Candidate, f64)> {
    let n = inst.n_jobs;
    let m = inst.n_machines;
    if n * m > limits.max_enum_bits {
        return Err(Error::OracleLimit(format!(
            "{n} jobs x {m} machines exceed the enumeration limit of {}",
            limits.max_enum_bits
        )));
    }
    if n > 30 {
        return Err(Error::OracleLimit(format!("{n} jobs are too many to enumerate")));
    }
    let required = inst.required_scenarios();
    let mut feasible_cache: Vec<HashMap<u32, bool>> = vec![HashMap::new(); inst.n_scenarios()];
    let mut best: Option<(Vec<Option<usize>>, Vec<bool>, f64)> = None;
    let mut digits = vec![0usize; n];
    let total = (m + 1).pow(n as u32);
    for _ in 0..total {
        let assignment: Vec<Option<usize>> =
            digits.iter().map(|&d| d.checked_sub(1)).collect();
        let mut masks = vec![0u32; m];
        for (j, a) in assignment.iter().enumerate() {
            if let Some(mm) = a {
                masks[*mm] |= 1 << j;
            }
        }
        if masks.iter().all(|s| s.count_ones() as usize <= inst.capacity) {
            let value: f64 = assignment
                .iter()
                .zip(&inst.utilities)
                .filter(|(a, _)| a.is_some())
                .map(|(_, f)| f)
                .sum();
            if best.as_ref().is_none_or(|b| value > b.2) {
                let mut z = vec![false; inst.n_scenarios()];
                for (w, zw) in z.iter_mut().enumerate() {
                    let mut ok = true;
                    for &mask in &masks {
                        if mask == 0 {
                            continue;
                        }
                        let fits = match feasible_cache[w].get(&mask) {
                            Some(&f) => f,
                            None => {
                                let jobs: Vec<usize> =
                                    (0..n).filter(|&j| mask >> j & 1 == 1).collect();
                                let t = brute_min_time(&jobs, &inst.scenarios[w], true, limits)?;
                                let f = t <= inst.time_limit + TIME_TOL;
                                feasible_cache[w].insert(mask, f);
                                f
                            }
                        };
                        if !fits {
                            ok = false;
                            break;
                        }
                    }
                    *zw = ok;
                }
                if z.iter().filter(|&&b| b).count() >= required {
                    best = Some((assignment, z, value));
                }
            }
        }
        // next digit vector, last job varying fastest
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d <= m {
                break;
            }
            *d = 0;
        }
    }
    let (assignment, z, value) = best.expect("the empty schedule is always feasible");
    Ok((Candidate { assignment, z }, value))
}

/// Exact shortest sequence time with closing setup by dynamic programming
/// over subsets. Independent of permutation enumeration; used for sets too
/// large to enumerate.
pub fn held_karp_min_time(jobs: &[usize], scenario: &Scenario) -> Result<f64> {
    const MAX_DP_JOBS: usize = 20;
    let k = jobs.len();
    if k > MAX_DP_JOBS {
        return Err(Error::OracleLimit(format!(
            "{k} jobs exceed the dynamic programming limit of {MAX_DP_JOBS}"
        )));
    }
    if k == 0 {
        return Ok(0.0);
    }
    // best[mask * k + last]: shortest time covering `mask` and ending at `last`
    let mut best = vec![f64::INFINITY; (1usize << k) * k];
    for (i, &j) in jobs.iter().enumerate() {
        best[(1 << i) * k + i] = scenario.exec_time(j);
    }
    for mask in 1usize..1 << k {
        for last in 0..k {
            let here = best[mask * k + last];
            if here.is_infinite() {
                continue;
            }
            for next in 0..k {
                if mask >> next & 1 == 1 {
                    continue;
                }
                let t = here + scenario.setup_time(jobs[last], jobs[next]) + scenario.exec_time(jobs[next]);
                let slot = &mut best[(mask | 1 << next) * k + next];
                if t < *slot {
                    *slot = t;
                }
            }
        }
    }
    let full = (1usize << k) - 1;
    Ok((0..k)
        .map(|last| best[full * k + last] + scenario.closing_time(jobs[last]))
        .fold(f64::INFINITY, f64::min))
}

/// Exact machine time: permutations when small enough, otherwise dynamic
/// programming.
pub fn exact_machine_time(jobs: &[usize], scenario: &Scenario, limits: &OracleLimits) -> Result<f64> {
    if jobs.len() <= limits.max_seq_jobs {
        brute_min_time(jobs, scenario, true, limits)
    } else {
        held_karp_min_time(jobs, scenario)
    }
}

/// Re-check a claimed schedule from scratch: assignment and capacity rows,
/// the chance constraint, every claimed scenario on every machine, and the
/// claimed objective. Returns a description of each problem found.
pub fn verify_solution(
    inst: &Instance,
    x: &[Vec<u8>],
    z: &[bool],
    claimed_objective: Option<f64>,
    limits: &OracleLimits,
) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    if x.len() != inst.n_jobs || x.iter().any(|r| r.len() != inst.n_machines) {
        return Err(Error::Dimension(format!(
            "assignment must be {} x {}",
            inst.n_jobs, inst.n_machines
        )));
    }
    if z.len() != inst.n_scenarios() {
        return Err(Error::Dimension(format!(
            "scenario vector must have {} entries",
            inst.n_scenarios()
        )));
    }
    for (j, row) in x.iter().enumerate() {
        if row.iter().any(|&v| v > 1) {
            problems.push(format!("job {} has a non-binary entry", j + 1));
        }
        let ones = row.iter().filter(|&&v| v != 0).count();
        if ones > 1 {
            problems.push(format!("job {} is assigned to {ones} machines", j + 1));
        }
    }
    let mut machines: Vec<Vec<usize>> = vec![Vec::new(); inst.n_machines];
    for (j, row) in x.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            if v != 0 {
                machines[m].push(j);
            }
        }
    }
    for (m, jobs) in machines.iter().enumerate() {
        if jobs.len() > inst.capacity {
            problems.push(format!(
                "machine {} holds {} jobs, capacity is {}",
                m + 1,
                jobs.len(),
                inst.capacity
            ));
        }
    }
    if !crate::model::chance_satisfied(inst, z) {
        problems.push(format!(
            "chance constraint broken: only {} of {} scenarios claimed, {} required",
            z.iter().filter(|&&b| b).count(),
            inst.n_scenarios(),
            inst.required_scenarios()
        ));
    }
    if problems.is_empty() {
        for (w, &claimed) in z.iter().enumerate() {
            if !claimed {
                continue;
            }
            for (m, jobs) in machines.iter().enumerate() {
                if jobs.is_empty() {
                    continue;
                }
                let t = exact_machine_time(jobs, &inst.scenarios[w], limits)?;
                if t > inst.time_limit + TIME_TOL {
                    problems.push(format!(
                        "machine {} needs {t:.6} > {} in scenario {}",
                        m + 1,
                        inst.time_limit,
                        w + 1
                    ));
                }
            }
        }
    }
    if let Some(claimed) = claimed_objective {
        let actual: f64 = (0..inst.n_jobs)
            .filter(|&j| x[j].iter().any(|&v| v != 0))
            .map(|j| inst.utilities[j])
            .sum();
        if (actual - claimed).abs() > 1e-6 {
            problems.push(format!("claimed objective {claimed} but schedule is worth {actual}"));
        }
    }
    Ok(problems)
}
