//! Dual values of the capacitated shortest path and the Benders cuts built
//! from them.
//!
//! Node potentials are shortest distances to the terminal where unusable
//! arcs are charged a penalty larger than any path. Every arc then has a
//! reduced cost `c + pi(head) - pi(tail)`; a negative reduced cost can only
//! occur on an unusable arc and is moved onto the capacity duals of the jobs
//! that block it. All dual constraints hold, so the cut is valid for every
//! column, and every non-zero term vanishes at the column it was built from.

use crate::error::{Error, Result};
use crate::model::{BendersTerms, Cut, CutKind, Scenario};

use super::{FlowArcKind, FlowDiagram};

/// Largest job count for which lifted coefficients are computed.
pub const MAX_LIFT_JOBS: usize = 10;

/// How the per-arc duals are aggregated into job coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CutStrategy {
    /// Sum of all arc duals of a job.
    Basic,
    /// Minimum arc dual of a job per layer, summed over layers.
    LayerMin,
    /// Layer minimum after lifting each arc dual by the best path through it.
    Lifted,
}

impl CutStrategy {
    pub fn name(self) -> &'static str {
        match self {
            CutStrategy::Basic => "Basic",
            CutStrategy::LayerMin => "Strategy1",
            CutStrategy::Lifted => "Strategy2",
        }
    }
}

/// Duals of one subproblem.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowDuals {
    /// Node potentials; `pi[root]` is the shortest usable path length.
    pub pi: Vec<f64>,
    /// Dual of the capacity of each assignment arc, zero elsewhere.
    pub alpha: Vec<f64>,
    /// Duals of the capacity of each non-assignment arc, one per job in its set.
    pub beta: Vec<Vec<(usize, f64)>>,
}

impl FlowDuals {
    pub fn shortest_path(&self) -> f64 {
        self.pi[0]
    }
}

fn path_bound(d: &FlowDiagram, scenario: &Scenario) -> f64 {
    let n = d.n_jobs();
    let mut bound = 1.0;
    let mut worst_close: f64 = 0.0;
    for v in 0..n {
        let worst_in = (0..n)
            .filter(|&u| u != v)
            .map(|u| scenario.setup_time(u, v))
            .fold(0.0, f64::max);
        bound += scenario.exec_time(v) + worst_in;
        worst_close = worst_close.max(scenario.closing_time(v));
    }
    bound + worst_close
}

/// Potentials and arc duals for one machine column in one scenario.
pub fn extract_duals(d: &FlowDiagram, column: &[bool], scenario: &Scenario) -> Result<FlowDuals> {
    if column.len() != d.n_jobs() || scenario.n_jobs() != d.n_jobs() {
        return Err(Error::Dimension(format!(
            "flow diagram over {} jobs given a column of {} and a scenario of {}",
            d.n_jobs(),
            column.len(),
            scenario.n_jobs()
        )));
    }
    let cost = d.arc_costs(scenario);
    let penalty = path_bound(d, scenario);
    let mut pi = vec![f64::INFINITY; d.nodes().len()];
    pi[d.terminal()] = 0.0;
    for n in (0..d.terminal()).rev() {
        pi[n] = d.nodes()[n]
            .out_arcs
            .iter()
            .map(|&a| {
                let extra = if d.enabled(a, column) { 0.0 } else { penalty };
                cost[a] + extra + pi[d.arcs()[a].to]
            })
            .fold(f64::INFINITY, f64::min);
    }
    let mut alpha = vec![0.0; d.arcs().len()];
    let mut beta = vec![Vec::new(); d.arcs().len()];
    for (a, arc) in d.arcs().iter().enumerate() {
        let reduced = cost[a] + pi[arc.to] - pi[arc.from];
        if reduced >= 0.0 {
            continue;
        }
        match arc.kind {
            FlowArcKind::Assign => alpha[a] = reduced,
            FlowArcKind::NonAssign => {
                beta[a] = arc
                    .capacity
                    .iter()
                    .filter(|&q| column[q])
                    .map(|q| (q, reduced))
                    .collect();
            }
            FlowArcKind::Free => {}
        }
    }
    Ok(FlowDuals { pi, alpha, beta })
}

/// Job coefficients `(assign, unassign)` summing every arc dual.
fn basic_coefficients(d: &FlowDiagram, alpha: &[f64], beta: &[Vec<(usize, f64)>]) -> (Vec<f64>, Vec<f64>) {
    let n = d.n_jobs();
    let mut assign = vec![0.0; n];
    let mut unassign = vec![0.0; n];
    for (a, arc) in d.arcs().iter().enumerate() {
        if arc.kind == FlowArcKind::Assign {
            assign[arc.job.expect("assignment arc carries a job")] += alpha[a];
        }
        for &(q, b) in &beta[a] {
            unassign[q] += b;
        }
    }
    (assign, unassign)
}

/// Per job, the smallest assignment dual of each layer summed over layers,
/// and the smallest non-assignment dual.
pub fn layer_min_coefficients(
    d: &FlowDiagram,
    alpha: &[f64],
    beta: &[Vec<(usize, f64)>],
) -> (Vec<f64>, Vec<f64>) {
    let n = d.n_jobs();
    let mut gamma = vec![vec![0.0f64; d.n_layers()]; n];
    let mut delta = vec![0.0f64; n];
    for (a, arc) in d.arcs().iter().enumerate() {
        if arc.kind == FlowArcKind::Assign {
            let q = arc.job.expect("assignment arc carries a job");
            let layer = d.arc_layer(a);
            gamma[q][layer] = gamma[q][layer].min(alpha[a]);
        }
        for &(q, b) in &beta[a] {
            delta[q] = delta[q].min(b);
        }
    }
    (gamma.into_iter().map(|g| g.iter().sum()).collect(), delta)
}

/// Raise each assignment dual to `min(0, l - pi_root)` where `l` is the
/// shortest path forced through the arc over every column with at most
/// `capacity` jobs.
pub fn lifted_alpha(
    d: &FlowDiagram,
    duals: &FlowDuals,
    scenario: &Scenario,
    capacity: usize,
) -> Result<Vec<f64>> {
    let n = d.n_jobs();
    if n > MAX_LIFT_JOBS {
        return Err(Error::UnsupportedScale(format!(
            "lifting enumerates columns and is limited to {MAX_LIFT_JOBS} jobs, got {n}"
        )));
    }
    let cost = d.arc_costs(scenario);
    let mut through = vec![f64::INFINITY; d.arcs().len()];
    let nodes = d.nodes().len();
    let mut fwd = vec![f64::INFINITY; nodes];
    let mut bwd = vec![f64::INFINITY; nodes];
    for bits in 0u32..1 << n {
        if bits.count_ones() as usize > capacity {
            continue;
        }
        let column: Vec<bool> = (0..n).map(|q| bits >> q & 1 == 1).collect();
        fwd.fill(f64::INFINITY);
        bwd.fill(f64::INFINITY);
        fwd[d.root()] = 0.0;
        for v in 0..nodes {
            if fwd[v].is_infinite() {
                continue;
            }
            for &a in &d.nodes()[v].out_arcs {
                if d.enabled(a, &column) {
                    let to = d.arcs()[a].to;
                    fwd[to] = fwd[to].min(fwd[v] + cost[a]);
                }
            }
        }
        bwd[d.terminal()] = 0.0;
        for v in (0..nodes).rev() {
            for &a in &d.nodes()[v].out_arcs {
                if d.enabled(a, &column) {
                    bwd[v] = bwd[v].min(cost[a] + bwd[d.arcs()[a].to]);
                }
            }
        }
        for (a, arc) in d.arcs().iter().enumerate() {
            if arc.kind == FlowArcKind::Assign && d.enabled(a, &column) {
                through[a] = through[a].min(fwd[arc.from] + cost[a] + bwd[arc.to]);
            }
        }
    }
    let root = duals.shortest_path();
    Ok(duals
        .alpha
        .iter()
        .zip(&through)
        .map(|(&al, &l)| al.max((l - root).min(0.0)))
        .collect())
}

/// Build the Benders cut of one failing machine column.
///
/// `big_m_floor` is the instance big-M; it is raised when needed so the row
/// is slack whenever the scenario indicator is 0.
#[allow(clippy::too_many_arguments)]
pub fn benders_cut(
    d: &FlowDiagram,
    column: &[bool],
    scenario: &Scenario,
    scenario_index: usize,
    strategy: CutStrategy,
    capacity: usize,
    time_limit: f64,
    big_m_floor: f64,
) -> Result<Cut> {
    let duals = extract_duals(d, column, scenario)?;
    let (assign, unassign) = match strategy {
        CutStrategy::Basic => basic_coefficients(d, &duals.alpha, &duals.beta),
        CutStrategy::LayerMin => layer_min_coefficients(d, &duals.alpha, &duals.beta),
        CutStrategy::Lifted => {
            let alpha = lifted_alpha(d, &duals, scenario, capacity)?;
            layer_min_coefficients(d, &alpha, &duals.beta)
        }
    };
    let constant = duals.shortest_path();
    let job_set: Vec<usize> = (0..column.len()).filter(|&q| column[q]).collect();
    Ok(Cut {
        job_set,
        scenario: scenario_index,
        kind: CutKind::BendersFlow,
        benders: Some(BendersTerms {
            constant,
            assign,
            unassign,
            big_m: big_m_floor.max(constant - time_limit),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::three_job_scenario;
    use crate::netflow::{build_flow_diagram, capacitated_shortest_path, FlowDiagramKind};

    fn columns(n: usize) -> impl Iterator<Item = Vec<bool>> {
        (0u32..1 << n).map(move |b| (0..n).map(|q| b >> q & 1 == 1).collect())
    }

    #[test]
    fn potentials_match_shortest_path() {
        let s = three_job_scenario();
        for kind in [FlowDiagramKind::Bdd, FlowDiagramKind::Mdd] {
            let d = build_flow_diagram(kind, 3).unwrap();
            for col in columns(3) {
                let duals = extract_duals(&d, &col, &s).unwrap();
                let sp = capacitated_shortest_path(&d, &col, &s).unwrap().cost;
                assert!((duals.shortest_path() - sp).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn cuts_are_tight_at_their_column_and_valid_elsewhere() {
        let s = three_job_scenario();
        for kind in [FlowDiagramKind::Bdd, FlowDiagramKind::Mdd] {
            let d = build_flow_diagram(kind, 3).unwrap();
            for strategy in [CutStrategy::Basic, CutStrategy::LayerMin, CutStrategy::Lifted] {
                for built in columns(3) {
                    let cut = benders_cut(&d, &built, &s, 0, strategy, 3, 5.0, 0.0).unwrap();
                    let terms = cut.benders.unwrap();
                    let sp = capacitated_shortest_path(&d, &built, &s).unwrap().cost;
                    assert!((terms.lhs(&built) - sp).abs() < 1e-9);
                    for other in columns(3) {
                        let sp = capacitated_shortest_path(&d, &other, &s).unwrap().cost;
                        assert!(terms.lhs(&other) <= sp + 1e-9, "{strategy:?} {built:?} {other:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn layer_min_dominates_basic() {
        let s = three_job_scenario();
        let d = build_flow_diagram(FlowDiagramKind::Bdd, 3).unwrap();
        for col in columns(3) {
            let duals = extract_duals(&d, &col, &s).unwrap();
            let (ba, bu) = basic_coefficients(&d, &duals.alpha, &duals.beta);
            let (la, lu) = layer_min_coefficients(&d, &duals.alpha, &duals.beta);
            let lifted = lifted_alpha(&d, &duals, &s, 3).unwrap();
            let (sa, _) = layer_min_coefficients(&d, &lifted, &duals.beta);
            for q in 0..3 {
                assert!(la[q] >= ba[q] - 1e-12 && lu[q] >= bu[q] - 1e-12);
                assert!(sa[q] >= la[q] - 1e-12 && sa[q] <= 0.0);
            }
        }
    }

    #[test]
    fn single_layer_strategies_coincide() {
        let mut s = three_job_scenario();
        s.exec.truncate(1);
        s.setup = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let d = build_flow_diagram(FlowDiagramKind::Mdd, 1).unwrap();
        for col in columns(1) {
            let a = benders_cut(&d, &col, &s, 0, CutStrategy::Basic, 1, 1.0, 0.0).unwrap();
            let b = benders_cut(&d, &col, &s, 0, CutStrategy::LayerMin, 1, 1.0, 0.0).unwrap();
            assert_eq!(a, b);
        }
    }
}
