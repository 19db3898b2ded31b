//! Master assignment model: which jobs go to which machine and which
//! scenarios are claimed satisfied. Sequencing is left to the subproblems
//! and enters only through cuts.

pub mod bnb;
pub mod lp;

use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use crate::error::Result;
use crate::model::{Candidate, Cut, CutKind, Instance, TIME_TOL};

pub use bnb::BranchAndBound;
pub use lp::{parse_solution, write_lp, ExternalBackend};

/// A decision variable of the master.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Assign { job: usize, machine: usize },
    Scenario(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Assign { job, machine } => write!(f, "x_{}_{}", job + 1, machine + 1),
            Var::Scenario(w) => write!(f, "z_{}", w + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// A linear row `sum(coef * var) sense rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    fn holds(&self, value: impl Fn(Var) -> f64) -> bool {
        let lhs: f64 = self.terms.iter().map(|&(v, c)| c * value(v)).sum();
        match self.sense {
            Sense::Le => lhs <= self.rhs + TIME_TOL,
            Sense::Ge => lhs >= self.rhs - TIME_TOL,
            Sense::Eq => (lhs - self.rhs).abs() <= TIME_TOL,
        }
    }
}

/// Lower bounds on each job's contribution to a machine's time, one table
/// per scenario, with the constant that deactivates the row.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationRows {
    pub weights: Vec<Vec<f64>>,
    pub big_m: Vec<f64>,
}

/// Execution time plus the cheapest setup leaving the job (to another job
/// or back to the dummy).
pub fn relaxation_weights(inst: &Instance) -> Vec<Vec<f64>> {
    inst.scenarios
        .iter()
        .map(|s| {
            (0..inst.n_jobs)
                .map(|j| {
                    let to_jobs = (0..inst.n_jobs)
                        .filter(|&k| k != j)
                        .map(|k| s.setup_time(j, k))
                        .fold(f64::INFINITY, f64::min);
                    s.exec_time(j) + to_jobs.min(s.closing_time(j))
                })
                .collect()
        })
        .collect()
}

type CutKey = (CutKind, usize, Vec<usize>);

/// The master problem with its current cut pool.
#[derive(Clone, Debug)]
pub struct MasterModel {
    pub n_jobs: usize,
    pub n_machines: usize,
    pub capacity: usize,
    pub utilities: Vec<f64>,
    pub scenario_prob: f64,
    pub epsilon: f64,
    /// Scenarios that must be satisfied.
    pub required: usize,
    pub time_limit: f64,
    pub big_m: Vec<f64>,
    pub symmetry: bool,
    pub relaxation: Option<RelaxationRows>,
    cuts: Vec<Cut>,
    keys: HashSet<CutKey>,
}

/// Assemble the master for an instance.
pub fn build_master(inst: &Instance, symmetry: bool, relaxation: bool) -> MasterModel {
    let relaxation = relaxation.then(|| {
        let weights = relaxation_weights(inst);
        let big_m = weights
            .iter()
            .zip(&inst.big_m)
            .map(|(w, &m)| {
                let mut sorted = w.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let heaviest: f64 = sorted.iter().take(inst.capacity).sum();
                m.max(heaviest - inst.time_limit)
            })
            .collect();
        RelaxationRows { weights, big_m }
    });
    MasterModel {
        n_jobs: inst.n_jobs,
        n_machines: inst.n_machines,
        capacity: inst.capacity,
        utilities: inst.utilities.clone(),
        scenario_prob: inst.scenario_prob,
        epsilon: inst.epsilon,
        required: inst.required_scenarios(),
        time_limit: inst.time_limit,
        big_m: inst.big_m.clone(),
        symmetry,
        relaxation,
        cuts: Vec::new(),
        keys: HashSet::new(),
    }
}

impl MasterModel {
    pub fn n_scenarios(&self) -> usize {
        self.big_m.len()
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// Append cuts not already present; returns the indices of those added.
    pub fn add_cuts(&mut self, cuts: impl IntoIterator<Item = Cut>) -> Vec<usize> {
        let mut added = Vec::new();
        for cut in cuts {
            let key = (cut.kind, cut.scenario, cut.job_set.clone());
            if self.keys.insert(key) {
                added.push(self.cuts.len());
                self.cuts.push(cut);
            }
        }
        added
    }

    pub fn n_vars(&self) -> usize {
        self.n_jobs * self.n_machines + self.n_scenarios()
    }

    /// Whether placing job `job` on `machine` is allowed by the symmetry rows,
    /// given the machine loads of the jobs before it.
    pub fn symmetry_allows(&self, job: usize, machine: usize, earlier_loads: &[usize]) -> bool {
        !self.symmetry || (machine <= job && (machine == 0 || earlier_loads[machine - 1] > 0))
    }

    /// Every row of the model, including rendered cuts.
    pub fn rows(&self) -> Vec<Row> {
        let (n, mm) = (self.n_jobs, self.n_machines);
        let x = |job, machine| Var::Assign { job, machine };
        let mut rows = Vec::new();
        for j in 0..n {
            rows.push(Row {
                name: format!("assign_{}", j + 1),
                terms: (0..mm).map(|m| (x(j, m), 1.0)).collect(),
                sense: Sense::Le,
                rhs: 1.0,
            });
        }
        for m in 0..mm {
            rows.push(Row {
                name: format!("capacity_{}", m + 1),
                terms: (0..n).map(|j| (x(j, m), 1.0)).collect(),
                sense: Sense::Le,
                rhs: self.capacity as f64,
            });
        }
        rows.push(Row {
            name: "chance".into(),
            terms: (0..self.n_scenarios()).map(|w| (Var::Scenario(w), 1.0)).collect(),
            sense: Sense::Ge,
            rhs: self.required as f64,
        });
        if self.symmetry {
            for j in 0..n {
                for m in j + 1..mm {
                    rows.push(Row {
                        name: format!("sym_fix_{}_{}", j + 1, m + 1),
                        terms: vec![(x(j, m), 1.0)],
                        sense: Sense::Eq,
                        rhs: 0.0,
                    });
                }
            }
            for j in 0..n {
                for m in 1..mm.min(j + 1) {
                    let mut terms = vec![(x(j, m), 1.0)];
                    terms.extend((0..j).map(|k| (x(k, m - 1), -1.0)));
                    rows.push(Row {
                        name: format!("sym_order_{}_{}", j + 1, m + 1),
                        terms,
                        sense: Sense::Le,
                        rhs: 0.0,
                    });
                }
            }
        }
        if let Some(relax) = &self.relaxation {
            for (w, weights) in relax.weights.iter().enumerate() {
                let big = relax.big_m[w];
                for m in 0..mm {
                    let mut terms: Vec<(Var, f64)> =
                        (0..n).map(|j| (x(j, m), weights[j])).collect();
                    terms.push((Var::Scenario(w), big));
                    rows.push(Row {
                        name: format!("relax_{}_{}", m + 1, w + 1),
                        terms,
                        sense: Sense::Le,
                        rhs: self.time_limit + big,
                    });
                }
            }
        }
        for (c, cut) in self.cuts.iter().enumerate() {
            for m in 0..mm {
                rows.push(render_cut(cut, c, m, self.time_limit));
            }
        }
        rows
    }

    /// Names of rows the candidate violates.
    pub fn violated_rows(&self, cand: &Candidate) -> Vec<String> {
        let value = |v: Var| match v {
            Var::Assign { job, machine } => f64::from(u8::from(cand.assignment[job] == Some(machine))),
            Var::Scenario(w) => f64::from(u8::from(cand.z[w])),
        };
        self.rows()
            .into_iter()
            .filter(|r| !r.holds(value))
            .map(|r| r.name)
            .collect()
    }

    pub fn objective(&self, cand: &Candidate) -> f64 {
        cand.assignment
            .iter()
            .zip(&self.utilities)
            .filter(|(a, _)| a.is_some())
            .map(|(_, f)| f)
            .sum()
    }
}

fn render_cut(cut: &Cut, index: usize, m: usize, time_limit: f64) -> Row {
    let x = |job| Var::Assign { job, machine: m };
    let name = format!("cut_{}_{}", index + 1, m + 1);
    match &cut.benders {
        None => {
            let mut terms: Vec<(Var, f64)> = cut.job_set.iter().map(|&j| (x(j), 1.0)).collect();
            terms.push((Var::Scenario(cut.scenario), 1.0));
            Row {
                name,
                terms,
                sense: Sense::Le,
                rhs: cut.job_set.len() as f64,
            }
        }
        Some(t) => {
            let mut terms: Vec<(Var, f64)> = (0..t.assign.len())
                .filter(|&q| t.assign[q] != t.unassign[q])
                .map(|q| (x(q), t.assign[q] - t.unassign[q]))
                .collect();
            terms.push((Var::Scenario(cut.scenario), t.big_m));
            let rhs = time_limit + t.big_m - t.constant - t.unassign.iter().sum::<f64>();
            Row {
                name,
                terms,
                sense: Sense::Le,
                rhs,
            }
        }
    }
}

/// Symmetry rows a 0/1 matrix `x[job][machine]` violates, as `(family, job, machine)`
/// with 1-based indices.
pub fn symmetry_violations(x: &[Vec<u8>]) -> Vec<(&'static str, usize, usize)> {
    let mut out = Vec::new();
    for (j, row) in x.iter().enumerate() {
        for (m, &v) in row.iter().enumerate() {
            if v == 0 {
                continue;
            }
            if m > j {
                out.push(("fix", j + 1, m + 1));
            }
            if m > 0 && !x[..j].iter().any(|r| r[m - 1] != 0) {
                out.push(("order", j + 1, m + 1));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
}

/// Result of one master solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendSolution {
    pub candidate: Option<Candidate>,
    pub objective: f64,
    /// Upper bound on the master optimum.
    pub bound: f64,
    pub status: SolveStatus,
    pub nodes: u64,
}

/// Called on every integer candidate the backend wants to accept; returns
/// cuts violated by it (none means the candidate is verified).
pub trait CandidateHook {
    fn on_candidate(&mut self, cand: &Candidate) -> Result<Vec<Cut>>;
}

/// A solver for [`MasterModel`].
pub trait MasterBackend {
    fn name(&self) -> &str;

    /// Solve to optimality or until `deadline`.
    fn solve(&mut self, model: &MasterModel, deadline: Instant) -> Result<BackendSolution>;

    /// Solve while consulting `hook` on every candidate. Backends without
    /// callback support return `Ok(None)`.
    fn solve_lazy(
        &mut self,
        _model: &mut MasterModel,
        _deadline: Instant,
        _hook: &mut dyn CandidateHook,
    ) -> Result<Option<BackendSolution>> {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::three_job_scenario;
    use crate::model::Scenario;

    fn small_instance() -> Instance {
        let s = three_job_scenario();
        Instance::new(2, 2, 5.0, 0.5, vec![1.0, 2.0, 3.0], vec![s.clone(), s]).unwrap()
    }

    #[test]
    fn row_counts_without_extras() {
        let m = build_master(&small_instance(), false, false);
        assert_eq!(m.n_vars(), 8);
        assert_eq!(m.rows().len(), 3 + 2 + 1);
    }

    #[test]
    fn relaxation_weights_of_example() {
        let w = relaxation_weights(&small_instance());
        assert_eq!(w[0], vec![3.0, 7.0, 4.0]);
    }

    #[test]
    fn relaxation_keeps_dummy_setup() {
        // points on a line: job 2 at -1, dummy at 0, job 1 at 0.5
        let setup = vec![
            vec![0.0, 0.5, 1.0],
            vec![0.5, 0.0, 1.5],
            vec![1.0, 1.5, 0.0],
        ];
        let s = Scenario {
            exec: vec![1.0, 1.0],
            setup,
        };
        let inst = Instance::new(1, 1, 3.0, 0.0, vec![1.0, 1.0], vec![s]).unwrap();
        assert_eq!(relaxation_weights(&inst)[0], vec![1.5, 2.0]);
    }

    #[test]
    fn mirrored_assignments() {
        let mut accepted = vec![vec![0u8; 3]; 5];
        for (j, m) in [(0, 0), (2, 0), (1, 1), (4, 1), (3, 2)] {
            accepted[j][m] = 1;
        }
        assert!(symmetry_violations(&accepted).is_empty());
        let mut rejected = vec![vec![0u8; 3]; 5];
        for (j, m) in [(0, 2), (2, 2), (1, 1), (4, 1), (3, 0)] {
            rejected[j][m] = 1;
        }
        let v = symmetry_violations(&rejected);
        assert!(v.contains(&("fix", 1, 3)));
        assert!(v.iter().any(|r| r.0 == "order"));
    }

    #[test]
    fn symmetry_rows_agree_with_checker() {
        let inst = small_instance();
        let model = build_master(&inst, true, false);
        for code in 0..9usize {
            let a = [code % 3, code / 3];
            let assignment: Vec<Option<usize>> = a
                .iter()
                .map(|&d| d.checked_sub(1))
                .chain(std::iter::once(None))
                .collect();
            let cand = Candidate {
                assignment,
                z: vec![true, true],
            };
            let rows_ok = !model.violated_rows(&cand).iter().any(|r| r.starts_with("sym"));
            let direct_ok = symmetry_violations(&cand.to_matrix(2)).is_empty();
            assert_eq!(rows_ok, direct_ok, "{cand:?}");
        }
    }

    #[test]
    fn pool_deduplicates() {
        let mut m = build_master(&small_instance(), false, false);
        let c = Cut::combinatorial(CutKind::Iis, 1, vec![2, 0]);
        assert_eq!(m.add_cuts([c.clone(), c.clone()]), vec![0]);
        assert!(m.add_cuts([c]).is_empty());
        assert_eq!(m.rows().len(), 6 + 2);
    }
}
