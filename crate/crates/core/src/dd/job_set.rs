//! Diagrams whose states remember only the scheduled set.
//!
//! Since a node no longer knows its last job, arc costs are cumulative: the
//! cost of an arc is the best time to reach its head through it.

use super::{DdState, DdVariant, Diagram, LocalTimes, StateSpec};
use crate::error::{Error, Result};
use crate::model::{JobMask, TIME_TOL};

#[derive(Clone, Copy, Debug)]
pub struct JobSetSpec {
    k: usize,
}

impl JobSetSpec {
    pub fn new(k: usize) -> JobSetSpec {
        JobSetSpec { k }
    }
}

impl StateSpec for JobSetSpec {
    fn variant(&self) -> DdVariant {
        DdVariant::JobSet
    }

    fn n_jobs(&self) -> usize {
        self.k
    }

    fn transition(&self, state: &DdState, job: usize) -> DdState {
        DdState {
            set: state.set.with(job),
            last: None,
        }
    }
}

/// Add `job` to a state, refusing jobs already scheduled.
pub fn js_transition(state: DdState, job: usize) -> Result<DdState> {
    if state.set.contains(job) {
        return Err(Error::Contract(format!(
            "job {} is already in {}",
            job + 1,
            state.set
        )));
    }
    Ok(DdState {
        set: state.set.with(job),
        last: None,
    })
}

/// Fill `memo` for the out-arcs of `node` from the memo of its in-arcs.
fn expand(d: &Diagram, node: usize, times: &LocalTimes, memo: &mut [f64]) {
    let n = &d.nodes()[node];
    let terminal = d.terminal();
    for &a in &n.out_arcs {
        let arc = d.arcs()[a];
        let v = arc.job;
        let reach = if n.in_arcs.is_empty() {
            0.0
        } else {
            n.in_arcs
                .iter()
                .map(|&b| memo[b] + times.setup[d.arcs()[b].job][v])
                .fold(f64::INFINITY, f64::min)
        };
        let mut c = reach + times.exec[v];
        if arc.to == terminal {
            c += times.closing[v];
        }
        memo[a] = c;
    }
}

fn node_time(d: &Diagram, node: usize, memo: &[f64]) -> f64 {
    d.nodes()[node]
        .in_arcs
        .iter()
        .map(|&a| memo[a])
        .fold(f64::INFINITY, f64::min)
}

/// Cumulative cost of every arc.
pub fn js_arc_costs(d: &Diagram, times: &LocalTimes) -> Vec<f64> {
    let mut memo = vec![f64::INFINITY; d.arcs().len()];
    for node in 0..d.terminal() {
        expand(d, node, times, &mut memo);
    }
    memo
}

pub fn js_min_time(d: &Diagram, times: &LocalTimes) -> f64 {
    let memo = js_arc_costs(d, times);
    node_time(d, d.terminal(), &memo)
}

/// Minimal infeasible job sets found in one forward pass. A node whose set
/// contains an already kept set is skipped; with `prune` its out-arcs are
/// never evaluated.
pub fn js_iis(d: &Diagram, times: &LocalTimes, time_limit: f64, prune: bool) -> Vec<JobMask> {
    let mut memo = vec![f64::INFINITY; d.arcs().len()];
    let mut kept: Vec<JobMask> = Vec::new();
    expand(d, d.root(), times, &mut memo);
    for node in 1..d.nodes().len() {
        let set = d.nodes()[node].state.set;
        let covered = kept.iter().any(|k| k.is_subset_of(set));
        if covered && prune {
            continue;
        }
        if !covered && node_time(d, node, &memo) > time_limit + TIME_TOL {
            kept.push(set);
        }
        if node != d.terminal() {
            expand(d, node, times, &mut memo);
        }
    }
    kept
}
