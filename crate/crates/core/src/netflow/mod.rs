//! Capacitated sequencing diagrams for flow-based Benders cuts.
//!
//! Unlike the sequencing diagrams in [`crate::dd`], these cover every job of
//! the instance. Arcs carry a capacity set: an assignment arc is usable only
//! when its job sits on the machine, a non-assignment arc only when none of
//! its jobs do. The shortest usable path is the machine's makespan.

pub mod cuts;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{JobMask, Scenario};

pub use cuts::{benders_cut, extract_duals, layer_min_coefficients, lifted_alpha, CutStrategy, FlowDuals};

/// Largest job count for the binary flow diagram.
pub const MAX_BDD_JOBS: usize = 10;
/// Largest job count for the multi-valued flow diagram.
pub const MAX_MDD_JOBS: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowDiagramKind {
    /// One binary layer per (position, job) pair.
    Bdd,
    /// One layer per position, one arc per job.
    Mdd,
}

impl FlowDiagramKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowDiagramKind::Bdd => "BDD-CAP",
            FlowDiagramKind::Mdd => "MDD-CAP",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowArcKind {
    /// Schedules its job; usable iff the job is on the machine.
    Assign,
    /// Closes the sequence; usable iff none of its jobs are on the machine.
    NonAssign,
    /// Zero-cost skip without a capacity condition.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowState {
    pub set: JobMask,
    pub last: Option<u8>,
}

#[derive(Clone, Debug)]
pub struct FlowNode {
    pub layer: usize,
    pub state: FlowState,
    pub in_arcs: Vec<usize>,
    pub out_arcs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub kind: FlowArcKind,
    /// Job scheduled by an assignment arc.
    pub job: Option<usize>,
    /// Jobs the capacity condition refers to.
    pub capacity: JobMask,
}

/// A compiled capacitated diagram. Node ids follow a topological order.
#[derive(Clone, Debug)]
pub struct FlowDiagram {
    kind: FlowDiagramKind,
    n_jobs: usize,
    nodes: Vec<FlowNode>,
    arcs: Vec<FlowArc>,
    n_layers: usize,
}

enum Target {
    Next(FlowState),
    Terminal,
}

impl FlowDiagram {
    pub fn kind(&self) -> FlowDiagramKind {
        self.kind
    }

    pub fn n_jobs(&self) -> usize {
        self.n_jobs
    }

    pub fn nodes(&self) -> &[FlowNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[FlowArc] {
        &self.arcs
    }

    /// Number of decision layers (the terminal is not counted).
    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn terminal(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Layer an arc leaves from.
    pub fn arc_layer(&self, arc: usize) -> usize {
        self.nodes[self.arcs[arc].from].layer
    }

    /// Cost of every arc in one scenario.
    pub fn arc_costs(&self, scenario: &Scenario) -> Vec<f64> {
        let full = JobMask::full(self.n_jobs);
        self.arcs
            .iter()
            .map(|a| {
                let from = self.nodes[a.from].state;
                match a.kind {
                    FlowArcKind::Free => 0.0,
                    FlowArcKind::NonAssign => {
                        from.last.map_or(0.0, |l| scenario.closing_time(l as usize))
                    }
                    FlowArcKind::Assign => {
                        let v = a.job.expect("assignment arc carries a job");
                        let mut c = scenario.exec_time(v);
                        if let Some(l) = from.last {
                            c += scenario.setup_time(l as usize, v);
                        }
                        if from.set.with(v) == full {
                            c += scenario.closing_time(v);
                        }
                        c
                    }
                }
            })
            .collect()
    }

    /// Whether arc `a` may carry flow for the given machine column.
    pub fn enabled(&self, a: usize, column: &[bool]) -> bool {
        let arc = &self.arcs[a];
        match arc.kind {
            FlowArcKind::Free => true,
            FlowArcKind::Assign => column[arc.job.expect("assignment arc carries a job")],
            FlowArcKind::NonAssign => arc.capacity.iter().all(|q| !column[q]),
        }
    }

    fn build(
        kind: FlowDiagramKind,
        n_jobs: usize,
        n_layers: usize,
        step: impl Fn(usize, &FlowState) -> Vec<(FlowArcKind, Option<usize>, JobMask, Target)>,
    ) -> FlowDiagram {
        let mut nodes: Vec<FlowNode> = vec![FlowNode {
            layer: 0,
            state: FlowState {
                set: JobMask::EMPTY,
                last: None,
            },
            in_arcs: Vec::new(),
            out_arcs: Vec::new(),
        }];
        // arcs whose head is the terminal get `usize::MAX` until it exists
        let mut arcs: Vec<FlowArc> = Vec::new();
        let mut current: Vec<usize> = vec![0];
        for layer in 0..n_layers {
            let mut index: HashMap<FlowState, usize> = HashMap::new();
            let mut next_states: Vec<FlowState> = Vec::new();
            // (tail, kind, job, capacity, head in the next layer)
            type PendingArc = (usize, FlowArcKind, Option<usize>, JobMask, Option<usize>);
            let mut pending: Vec<PendingArc> = Vec::new();
            for &id in &current {
                let state = nodes[id].state;
                for (k, job, cap, target) in step(layer, &state) {
                    let head = match target {
                        Target::Next(s) if layer + 1 < n_layers => {
                            Some(*index.entry(s).or_insert_with(|| {
                                next_states.push(s);
                                next_states.len() - 1
                            }))
                        }
                        _ => None,
                    };
                    pending.push((id, k, job, cap, head));
                }
            }
            let mut order: Vec<usize> = (0..next_states.len()).collect();
            order.sort_by_key(|&i| next_states[i]);
            let base = nodes.len();
            let mut rank = vec![0; next_states.len()];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
                nodes.push(FlowNode {
                    layer: layer + 1,
                    state: next_states[i],
                    in_arcs: Vec::new(),
                    out_arcs: Vec::new(),
                });
            }
            for (from, k, job, capacity, head) in pending {
                let to = head.map_or(usize::MAX, |h| base + rank[h]);
                arcs.push(FlowArc {
                    from,
                    to,
                    kind: k,
                    job,
                    capacity,
                });
            }
            current = (base..nodes.len()).collect();
        }
        let terminal = nodes.len();
        nodes.push(FlowNode {
            layer: n_layers,
            state: FlowState {
                set: JobMask::full(n_jobs),
                last: None,
            },
            in_arcs: Vec::new(),
            out_arcs: Vec::new(),
        });
        for (id, a) in arcs.iter_mut().enumerate() {
            if a.to == usize::MAX {
                a.to = terminal;
            }
            nodes[a.from].out_arcs.push(id);
            nodes[a.to].in_arcs.push(id);
        }
        FlowDiagram {
            kind,
            n_jobs,
            nodes,
            arcs,
            n_layers,
        }
    }
}

/// Binary capacitated diagram: layer `(p, j)` decides whether job `j` takes
/// position `p`, visited position-major.
pub fn build_bdd_cap(n_jobs: usize) -> Result<FlowDiagram> {
    check_size(n_jobs, MAX_BDD_JOBS, FlowDiagramKind::Bdd)?;
    let n = n_jobs;
    let full = JobMask::full(n);
    Ok(FlowDiagram::build(FlowDiagramKind::Bdd, n, n * n, |layer, s| {
        let (p, j) = (layer / n, layer % n);
        let mut out = Vec::new();
        if s.set.len() == p + 1 {
            out.push((FlowArcKind::Free, None, JobMask::EMPTY, Target::Next(*s)));
            return out;
        }
        if !s.set.contains(j) {
            let next = FlowState {
                set: s.set.with(j),
                last: Some(j as u8),
            };
            out.push((FlowArcKind::Assign, Some(j), JobMask::single(j), Target::Next(next)));
        }
        if (j + 1..n).any(|q| !s.set.contains(q)) {
            out.push((FlowArcKind::Free, None, JobMask::EMPTY, Target::Next(*s)));
        } else {
            let rest = JobMask(full.0 & !s.set.0);
            out.push((FlowArcKind::NonAssign, None, rest, Target::Terminal));
        }
        out
    }))
}

/// Multi-valued capacitated diagram: layer `p` picks the job at position `p`
/// or closes the sequence.
pub fn build_mdd_cap(n_jobs: usize) -> Result<FlowDiagram> {
    check_size(n_jobs, MAX_MDD_JOBS, FlowDiagramKind::Mdd)?;
    let n = n_jobs;
    let full = JobMask::full(n);
    Ok(FlowDiagram::build(FlowDiagramKind::Mdd, n, n, |_, s| {
        let mut out = Vec::new();
        for v in (0..n).filter(|&v| !s.set.contains(v)) {
            let next = FlowState {
                set: s.set.with(v),
                last: Some(v as u8),
            };
            out.push((FlowArcKind::Assign, Some(v), JobMask::single(v), Target::Next(next)));
        }
        let rest = JobMask(full.0 & !s.set.0);
        out.push((FlowArcKind::NonAssign, None, rest, Target::Terminal));
        out
    }))
}

pub fn build_flow_diagram(kind: FlowDiagramKind, n_jobs: usize) -> Result<FlowDiagram> {
    match kind {
        FlowDiagramKind::Bdd => build_bdd_cap(n_jobs),
        FlowDiagramKind::Mdd => build_mdd_cap(n_jobs),
    }
}

fn check_size(n: usize, max: usize, kind: FlowDiagramKind) -> Result<()> {
    if n == 0 {
        return Err(Error::Contract("a flow diagram needs at least one job".into()));
    }
    if n > max {
        return Err(Error::UnsupportedScale(format!(
            "{} over {n} jobs exceeds the limit of {max}",
            kind.name()
        )));
    }
    Ok(())
}

/// Shortest usable path and its arcs.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowPath {
    pub cost: f64,
    pub arcs: Vec<usize>,
}

/// Shortest root to terminal path using only arcs enabled by `column`.
pub fn capacitated_shortest_path(
    d: &FlowDiagram,
    column: &[bool],
    scenario: &Scenario,
) -> Result<FlowPath> {
    if column.len() != d.n_jobs() || scenario.n_jobs() != d.n_jobs() {
        return Err(Error::Dimension(format!(
            "flow diagram over {} jobs given a column of {} and a scenario of {}",
            d.n_jobs(),
            column.len(),
            scenario.n_jobs()
        )));
    }
    let cost = d.arc_costs(scenario);
    let mut dist = vec![f64::INFINITY; d.nodes().len()];
    let mut pred = vec![usize::MAX; d.nodes().len()];
    dist[d.root()] = 0.0;
    for n in 0..d.nodes().len() {
        if dist[n].is_infinite() {
            continue;
        }
        for &a in &d.nodes()[n].out_arcs {
            if !d.enabled(a, column) {
                continue;
            }
            let to = d.arcs()[a].to;
            let v = dist[n] + cost[a];
            if v < dist[to] {
                dist[to] = v;
                pred[to] = a;
            }
        }
    }
    let t = d.terminal();
    if dist[t].is_infinite() {
        return Err(Error::Contract("no usable path through the flow diagram".into()));
    }
    let mut arcs = Vec::new();
    let mut n = t;
    while n != d.root() {
        let a = pred[n];
        arcs.push(a);
        n = d.arcs()[a].from;
    }
    arcs.reverse();
    Ok(FlowPath { cost: dist[t], arcs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::three_job_scenario;

    fn count(d: &FlowDiagram, kind: FlowArcKind) -> usize {
        d.arcs().iter().filter(|a| a.kind == kind).count()
    }

    #[test]
    fn single_job_diagrams() {
        for kind in [FlowDiagramKind::Bdd, FlowDiagramKind::Mdd] {
            let d = build_flow_diagram(kind, 1).unwrap();
            assert_eq!(d.n_layers(), 1);
            assert_eq!(count(&d, FlowArcKind::Assign), 1);
            assert_eq!(count(&d, FlowArcKind::NonAssign), 1);
        }
    }

    #[test]
    fn bdd_layer_count_and_example_node() {
        let d = build_bdd_cap(3).unwrap();
        assert_eq!(d.n_layers(), 9);
        // before deciding job 3 at position 2 with only job 2 placed
        let layer = 3 + 2;
        let node = d
            .nodes()
            .iter()
            .position(|n| {
                n.layer == layer
                    && n.state
                        == FlowState {
                            set: JobMask::single(1),
                            last: Some(1),
                        }
            })
            .unwrap();
        let out: Vec<&FlowArc> = d.nodes()[node].out_arcs.iter().map(|&a| &d.arcs()[a]).collect();
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .any(|a| a.kind == FlowArcKind::Assign && a.capacity == JobMask::single(2)));
        assert!(out.iter().any(|a| a.kind == FlowArcKind::NonAssign
            && a.capacity == JobMask::from_jobs([0, 2])
            && a.to == d.terminal()));
    }

    #[test]
    fn shortest_path_matches_machine_time() {
        let s = three_job_scenario();
        for kind in [FlowDiagramKind::Bdd, FlowDiagramKind::Mdd] {
            let d = build_flow_diagram(kind, 3).unwrap();
            let none = capacitated_shortest_path(&d, &[false; 3], &s).unwrap();
            assert_eq!(none.cost, 0.0);
            let only2 = capacitated_shortest_path(&d, &[false, true, false], &s).unwrap();
            assert_eq!(only2.cost, 7.0);
            let all = capacitated_shortest_path(&d, &[true; 3], &s).unwrap();
            assert_eq!(all.cost, 14.0);
            let pair = capacitated_shortest_path(&d, &[true, false, true], &s).unwrap();
            assert_eq!(pair.cost, 7.0);
        }
    }

    #[test]
    fn size_guards() {
        assert!(matches!(build_bdd_cap(MAX_BDD_JOBS + 1), Err(Error::UnsupportedScale(_))));
        assert!(matches!(build_mdd_cap(MAX_MDD_JOBS + 1), Err(Error::UnsupportedScale(_))));
    }
}
