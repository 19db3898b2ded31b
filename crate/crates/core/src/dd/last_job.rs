//! Diagrams whose states remember the scheduled set and the last job.

use std::collections::HashMap;

use super::{DdState, DdVariant, Diagram, LocalTimes, StateSpec};
use crate::error::{Error, Result};
use crate::model::{JobMask, TIME_TOL};

#[derive(Clone, Copy, Debug)]
pub struct LastJobSpec {
    k: usize,
}

impl LastJobSpec {
    pub fn new(k: usize) -> LastJobSpec {
        LastJobSpec { k }
    }
}

impl StateSpec for LastJobSpec {
    fn variant(&self) -> DdVariant {
        DdVariant::LastJob
    }

    fn n_jobs(&self) -> usize {
        self.k
    }

    fn transition(&self, state: &DdState, job: usize) -> DdState {
        DdState {
            set: state.set.with(job),
            last: Some(job as u8),
        }
    }
}

/// Append `job` to a state, refusing jobs already scheduled.
pub fn lj_transition(state: DdState, job: usize) -> Result<DdState> {
    if state.set.contains(job) {
        return Err(Error::Contract(format!(
            "job {} is already in {}",
            job + 1,
            state.set
        )));
    }
    Ok(DdState {
        set: state.set.with(job),
        last: Some(job as u8),
    })
}

#[inline]
fn arc_cost(d: &Diagram, arc: usize, times: &LocalTimes) -> f64 {
    let a = &d.arcs()[arc];
    let v = a.job;
    let mut c = times.exec[v];
    if let Some(l) = d.nodes()[a.from].state.last {
        c += times.setup[l as usize][v];
    }
    if a.to == d.terminal() {
        c += times.closing[v];
    }
    c
}

/// Earliest completion time of every node.
pub fn lj_node_times(d: &Diagram, times: &LocalTimes) -> Vec<f64> {
    let mut time = vec![f64::INFINITY; d.nodes().len()];
    time[d.root()] = 0.0;
    for id in 1..d.nodes().len() {
        time[id] = d.nodes()[id]
            .in_arcs
            .iter()
            .map(|&a| time[d.arcs()[a].from] + arc_cost(d, a, times))
            .fold(f64::INFINITY, f64::min);
    }
    time
}

pub fn lj_min_time(d: &Diagram, times: &LocalTimes) -> f64 {
    lj_node_times(d, times)[d.terminal()]
}

/// Minimal infeasible job sets. The best time of a set is the minimum over
/// the nodes sharing it; sets are then kept by size when over the limit and
/// free of smaller kept subsets.
pub fn lj_iis(d: &Diagram, times: &LocalTimes, time_limit: f64) -> Vec<JobMask> {
    let time = lj_node_times(d, times);
    let mut best: HashMap<JobMask, f64> = HashMap::new();
    for (id, node) in d.nodes().iter().enumerate().skip(1) {
        let e = best.entry(node.state.set).or_insert(f64::INFINITY);
        *e = e.min(time[id]);
    }
    let mut sets: Vec<(JobMask, f64)> = best.into_iter().collect();
    sets.sort_by_key(|&(s, _)| (s.len(), s));
    let mut kept: Vec<JobMask> = Vec::new();
    for (set, t) in sets {
        if t > time_limit + TIME_TOL && !kept.iter().any(|k| k.is_subset_of(set)) {
            kept.push(set);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::{build_diagram, canonical_remap};
    use crate::model::tests::three_job_scenario;

    fn example_times() -> LocalTimes {
        LocalTimes::new(&three_job_scenario(), &canonical_remap(&[0, 1, 2]).unwrap())
    }

    #[test]
    fn worked_example_node_times() {
        let d = build_diagram(DdVariant::LastJob, 3).unwrap();
        let time = lj_node_times(&d, &example_times());
        let by_state: Vec<(String, Option<u8>, f64)> = d
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.state.set.to_string(), n.state.last, time[i]))
            .collect();
        let want = [
            ("{1}", Some(0), 2.0),
            ("{2}", Some(1), 6.0),
            ("{3}", Some(2), 3.0),
            ("{1,2}", Some(0), 9.0),
            ("{1,2}", Some(1), 9.0),
            ("{1,3}", Some(0), 6.0),
            ("{1,3}", Some(2), 6.0),
            ("{2,3}", Some(1), 10.0),
            ("{2,3}", Some(2), 10.0),
        ];
        for (set, last, t) in want {
            assert!(
                by_state.iter().any(|(s, l, v)| *s == set && *l == last && (v - t).abs() < 1e-9),
                "{set} {last:?}"
            );
        }
        assert!((time[d.terminal()] - 14.0).abs() < 1e-9);
    }

    #[test]
    fn worked_example_iis() {
        let d = build_diagram(DdVariant::LastJob, 3).unwrap();
        let iis = lj_iis(&d, &example_times(), 5.0);
        assert_eq!(iis, vec![JobMask::from_jobs([1]), JobMask::from_jobs([0, 2])]);
    }

    #[test]
    fn single_job_pays_exec_and_closing() {
        let mut s = three_job_scenario();
        s.exec[0] = 4.0;
        let d = build_diagram(DdVariant::LastJob, 1).unwrap();
        let t = LocalTimes::new(&s, &canonical_remap(&[0]).unwrap());
        assert_eq!(lj_min_time(&d, &t), 5.0);
    }

    #[test]
    fn transition_rejects_repeat() {
        let s = lj_transition(DdState::ROOT, 1).unwrap();
        assert_eq!(s.last, Some(1));
        assert!(lj_transition(s, 1).is_err());
    }

    #[test]
    fn feasible_set_has_no_iis() {
        let d = build_diagram(DdVariant::LastJob, 3).unwrap();
        assert!(lj_iis(&d, &example_times(), 100.0).is_empty());
    }
}
