//! Depth-first branch and bound for the master.
//!
//! Jobs are decided in index order, each either placed on a machine or left
//! out. Every scenario carries a counter of rows that force its indicator to
//! 0 under the current partial assignment; a branch is abandoned once fewer
//! scenarios than required remain. Indicators are then set to 1 for every
//! scenario still alive, which satisfies all rows.

use std::time::Instant;

use super::{BackendSolution, CandidateHook, MasterBackend, MasterModel, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{Candidate, Cut, TIME_TOL};

/// How many nodes are expanded between deadline checks.
const CLOCK_STRIDE: u64 = 256;

/// The built-in exact master solver.
#[derive(Clone, Debug, Default)]
pub struct BranchAndBound {
    /// Stop after this many nodes (used in tests).
    pub node_limit: Option<u64>,
}

impl BranchAndBound {
    pub fn new() -> BranchAndBound {
        BranchAndBound::default()
    }
}

impl MasterBackend for BranchAndBound {
    fn name(&self) -> &str {
        "builtin"
    }

    fn solve(&mut self, model: &MasterModel, deadline: Instant) -> Result<BackendSolution> {
        let mut search = Search::new(model, deadline, self.node_limit);
        search.run(None, &mut model.clone())?;
        Ok(search.finish())
    }

    fn solve_lazy(
        &mut self,
        model: &mut MasterModel,
        deadline: Instant,
        hook: &mut dyn CandidateHook,
    ) -> Result<Option<BackendSolution>> {
        let mut search = Search::new(model, deadline, self.node_limit);
        search.run(Some(hook), model)?;
        Ok(Some(search.finish()))
    }
}

/// A combinatorial cut: scenario dies when all its jobs share a machine.
struct SetCut {
    scenario: usize,
    size: usize,
    /// Jobs of the set on each machine.
    on_machine: Vec<usize>,
}

/// A flow cut, tracked by a lower bound on its left-hand side per machine.
struct FlowCut {
    scenario: usize,
    assign: Vec<f64>,
    unassign: Vec<f64>,
    lhs_bound: Vec<f64>,
    violated: Vec<bool>,
}

impl FlowCut {
    fn delta(&self, job: usize, on_this_machine: bool) -> f64 {
        let chosen = if on_this_machine {
            self.assign[job]
        } else {
            self.unassign[job]
        };
        chosen - self.assign[job].min(self.unassign[job])
    }
}

enum Flow {
    Continue,
    Stop,
}

struct Search {
    n: usize,
    machines: usize,
    capacity: usize,
    required: usize,
    utilities: Vec<f64>,
    time_limit: f64,
    symmetry: bool,
    /// `best_rest[d][r]`: largest utility of `r` jobs among jobs `d..`.
    best_rest: Vec<Vec<f64>>,
    // relaxation rows
    weights: Option<Vec<Vec<f64>>>,
    loads: Vec<Vec<f64>>,
    overloaded: Vec<Vec<bool>>,
    // cuts
    set_cuts: Vec<SetCut>,
    set_cuts_of_job: Vec<Vec<usize>>,
    flow_cuts: Vec<FlowCut>,
    registered: usize,
    // partial assignment; jobs before `depth` are decided
    depth: usize,
    assignment: Vec<Option<usize>>,
    loads_count: Vec<usize>,
    value: f64,
    kills: Vec<u32>,
    alive: usize,
    // search control
    incumbent: Option<(Candidate, f64)>,
    open_bound: f64,
    timed_out: bool,
    nodes: u64,
    node_limit: Option<u64>,
    deadline: Instant,
}

impl Search {
    fn new(model: &MasterModel, deadline: Instant, node_limit: Option<u64>) -> Search {
        let n = model.n_jobs;
        let best_rest = (0..=n)
            .map(|d| {
                let mut rest: Vec<f64> = model.utilities[d..].to_vec();
                rest.sort_by(|a, b| b.total_cmp(a));
                let mut prefix = vec![0.0];
                for f in rest {
                    prefix.push(prefix.last().unwrap() + f);
                }
                prefix
            })
            .collect();
        let omega = model.n_scenarios();
        let mut s = Search {
            n,
            machines: model.n_machines,
            capacity: model.capacity,
            required: model.required,
            utilities: model.utilities.clone(),
            time_limit: model.time_limit,
            symmetry: model.symmetry,
            best_rest,
            weights: model.relaxation.as_ref().map(|r| r.weights.clone()),
            loads: vec![vec![0.0; omega]; model.n_machines],
            overloaded: vec![vec![false; omega]; model.n_machines],
            set_cuts: Vec::new(),
            set_cuts_of_job: vec![Vec::new(); n],
            flow_cuts: Vec::new(),
            registered: 0,
            depth: 0,
            assignment: vec![None; n],
            loads_count: vec![0; model.n_machines],
            value: 0.0,
            kills: vec![0; omega],
            alive: omega,
            incumbent: None,
            open_bound: f64::NEG_INFINITY,
            timed_out: false,
            nodes: 0,
            node_limit,
            deadline,
        };
        s.register_cuts(model);
        s
    }

    fn kill(&mut self, w: usize) {
        if self.kills[w] == 0 {
            self.alive -= 1;
        }
        self.kills[w] += 1;
    }

    fn revive(&mut self, w: usize) {
        self.kills[w] -= 1;
        if self.kills[w] == 0 {
            self.alive += 1;
        }
    }

    /// Load the cuts of `model` not yet known, accounting for the current
    /// partial assignment.
    fn register_cuts(&mut self, model: &MasterModel) {
        let limit = self.time_limit + TIME_TOL;
        for cut in &model.cuts()[self.registered..] {
            self.add_cut(cut, limit);
        }
        self.registered = model.cuts().len();
    }

    fn add_cut(&mut self, cut: &Cut, limit: f64) {
        match &cut.benders {
            None => {
                let mut on_machine = vec![0; self.machines];
                for &j in &cut.job_set {
                    if let Some(m) = self.assignment[j] {
                        on_machine[m] += 1;
                    }
                }
                let size = cut.job_set.len();
                let id = self.set_cuts.len();
                for &j in &cut.job_set {
                    self.set_cuts_of_job[j].push(id);
                }
                let dead = on_machine.iter().filter(|&&c| c == size).count();
                self.set_cuts.push(SetCut {
                    scenario: cut.scenario,
                    size,
                    on_machine,
                });
                for _ in 0..dead {
                    self.kill(cut.scenario);
                }
            }
            Some(t) => {
                let mut fc = FlowCut {
                    scenario: cut.scenario,
                    assign: t.assign.clone(),
                    unassign: t.unassign.clone(),
                    lhs_bound: vec![0.0; self.machines],
                    violated: vec![false; self.machines],
                };
                let base: f64 = t.constant
                    + (0..self.n)
                        .map(|q| t.assign[q].min(t.unassign[q]))
                        .sum::<f64>();
                let mut dead = 0;
                for m in 0..self.machines {
                    let mut v = base;
                    for j in 0..self.n {
                        if self.decided(j) {
                            v += fc.delta(j, self.assignment[j] == Some(m));
                        }
                    }
                    fc.lhs_bound[m] = v;
                    fc.violated[m] = v > limit;
                    dead += usize::from(fc.violated[m]);
                }
                let w = fc.scenario;
                self.flow_cuts.push(fc);
                for _ in 0..dead {
                    self.kill(w);
                }
            }
        }
    }

    fn decided(&self, j: usize) -> bool {
        j < self.depth
    }

    fn apply(&mut self, j: usize, choice: Option<usize>, sign: f64) {
        let limit = self.time_limit + TIME_TOL;
        if let Some(m) = choice {
            if let Some(weights) = self.weights.take() {
                for (w, row) in weights.iter().enumerate() {
                    self.loads[m][w] += sign * row[j];
                    let over = self.loads[m][w] > limit;
                    if over != self.overloaded[m][w] {
                        self.overloaded[m][w] = over;
                        if over {
                            self.kill(w);
                        } else {
                            self.revive(w);
                        }
                    }
                }
                self.weights = Some(weights);
            }
            for i in 0..self.set_cuts_of_job[j].len() {
                let c = self.set_cuts_of_job[j][i];
                let (w, size) = (self.set_cuts[c].scenario, self.set_cuts[c].size);
                if sign > 0.0 {
                    self.set_cuts[c].on_machine[m] += 1;
                    if self.set_cuts[c].on_machine[m] == size {
                        self.kill(w);
                    }
                } else {
                    if self.set_cuts[c].on_machine[m] == size {
                        self.revive(w);
                    }
                    self.set_cuts[c].on_machine[m] -= 1;
                }
            }
        }
        for c in 0..self.flow_cuts.len() {
            for m in 0..self.machines {
                let d = self.flow_cuts[c].delta(j, choice == Some(m));
                if d == 0.0 {
                    continue;
                }
                let fc = &mut self.flow_cuts[c];
                fc.lhs_bound[m] += sign * d;
                let over = fc.lhs_bound[m] > limit;
                if over != fc.violated[m] {
                    fc.violated[m] = over;
                    let w = fc.scenario;
                    if over {
                        self.kill(w);
                    } else {
                        self.revive(w);
                    }
                }
            }
        }
    }

    fn bound(&self, j: usize) -> f64 {
        let residual: usize = self
            .loads_count
            .iter()
            .map(|&c| self.capacity - c)
            .sum();
        let rest = &self.best_rest[j];
        self.value + rest[residual.min(rest.len() - 1)]
    }

    fn out_of_time(&mut self) -> bool {
        if self.node_limit.is_some_and(|l| self.nodes >= l) {
            return true;
        }
        self.nodes.is_multiple_of(CLOCK_STRIDE) && Instant::now() >= self.deadline
    }

    fn run(&mut self, mut hook: Option<&mut dyn CandidateHook>, model: &mut MasterModel) -> Result<()> {
        self.depth = 0;
        self.dfs(&mut hook, model)?;
        Ok(())
    }

    fn dfs(&mut self, hook: &mut Option<&mut dyn CandidateHook>, model: &mut MasterModel) -> Result<Flow> {
        self.nodes += 1;
        let j = self.depth;
        let bound = self.bound(j);
        if self.out_of_time() {
            self.timed_out = true;
            self.open_bound = self.open_bound.max(bound);
            return Ok(Flow::Stop);
        }
        if self.alive < self.required {
            return Ok(Flow::Continue);
        }
        let best = self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.1);
        if bound <= best + 1e-9 {
            return Ok(Flow::Continue);
        }
        if j == self.n {
            self.leaf(hook, model)?;
            return Ok(Flow::Continue);
        }
        let mut choices: Vec<Option<usize>> = (0..self.machines)
            .filter(|&m| self.loads_count[m] < self.capacity)
            .filter(|&m| {
                !self.symmetry || (m <= j && (m == 0 || self.loads_count[m - 1] > 0))
            })
            .map(Some)
            .collect();
        choices.push(None);
        for choice in choices {
            self.decide(j, choice);
            let flow = self.dfs(hook, model)?;
            self.undo(j, choice);
            if let Flow::Stop = flow {
                self.open_bound = self.open_bound.max(bound);
                return Ok(Flow::Stop);
            }
            // a lazy cut may have tightened the incumbent
            let best = self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.1);
            if self.bound(j) <= best + 1e-9 {
                break;
            }
        }
        Ok(Flow::Continue)
    }

    fn decide(&mut self, j: usize, choice: Option<usize>) {
        self.assignment[j] = choice;
        if let Some(m) = choice {
            self.loads_count[m] += 1;
            self.value += self.utilities[j];
        }
        self.apply(j, choice, 1.0);
        self.depth = j + 1;
    }

    fn undo(&mut self, j: usize, choice: Option<usize>) {
        self.apply(j, choice, -1.0);
        if let Some(m) = choice {
            self.loads_count[m] -= 1;
            self.value -= self.utilities[j];
        }
        self.assignment[j] = None;
        self.depth = j;
    }

    fn alive_flags(&self) -> Vec<bool> {
        self.kills.iter().map(|&k| k == 0).collect()
    }

    fn leaf(&mut self, hook: &mut Option<&mut dyn CandidateHook>, model: &mut MasterModel) -> Result<()> {
        let cand = Candidate {
            assignment: self.assignment.clone(),
            z: self.alive_flags(),
        };
        if let Some(h) = hook.as_deref_mut() {
            let cuts = h.on_candidate(&cand)?;
            if !cuts.is_empty() {
                let scenarios: Vec<usize> = cuts.iter().map(|c| c.scenario).collect();
                model.add_cuts(cuts);
                self.register_cuts(model);
                if scenarios.iter().any(|&w| self.kills[w] == 0) {
                    return Err(Error::NoProgress(
                        "lazy cuts do not separate the rejected candidate".into(),
                    ));
                }
                if self.alive < self.required {
                    return Ok(());
                }
                let cand = Candidate {
                    assignment: self.assignment.clone(),
                    z: self.alive_flags(),
                };
                self.incumbent = Some((cand, self.value));
                return Ok(());
            }
        }
        self.incumbent = Some((cand, self.value));
        Ok(())
    }

    fn finish(self) -> BackendSolution {
        let (candidate, objective) = match self.incumbent {
            Some((c, v)) => (Some(c), v),
            None => (None, f64::NEG_INFINITY),
        };
        let (status, bound) = if self.timed_out {
            (SolveStatus::TimeLimit, self.open_bound.max(objective))
        } else {
            (SolveStatus::Optimal, objective)
        };
        BackendSolution {
            candidate,
            objective,
            bound,
            status,
            nodes: self.nodes,
        }
    }
}
