//! Instance, candidate and cut types shared by every solver component.
//!
//! Jobs are 0-based inside the library. In setup matrices index 0 is the
//! dummy start/end job and job `j` lives at index `j + 1`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when comparing a sequence duration against the time limit.
pub const TIME_TOL: f64 = 1e-9;
/// Slack used when comparing a probability mass against `1 - epsilon`.
pub const PROB_TOL: f64 = 1e-12;

/// Bit set over at most 32 jobs, indexed from 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobMask(pub u32);

impl JobMask {
    pub const EMPTY: JobMask = JobMask(0);
    pub const MAX_JOBS: usize = 32;

    pub fn full(k: usize) -> JobMask {
        assert!(k <= Self::MAX_JOBS);
        if k == 32 {
            JobMask(u32::MAX)
        } else {
            JobMask((1u32 << k) - 1)
        }
    }

    pub fn single(j: usize) -> JobMask {
        JobMask(1u32 << j)
    }

    pub fn from_jobs(jobs: impl IntoIterator<Item = usize>) -> JobMask {
        jobs.into_iter().fold(JobMask::EMPTY, |m, j| m.with(j))
    }

    pub fn contains(self, j: usize) -> bool {
        self.0 >> j & 1 == 1
    }

    pub fn with(self, j: usize) -> JobMask {
        JobMask(self.0 | 1u32 << j)
    }

    pub fn without(self, j: usize) -> JobMask {
        JobMask(self.0 & !(1u32 << j))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: JobMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let j = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(j)
            }
        })
    }
}

impl fmt::Display for JobMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

/// Which calibration produced an instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "ORS")]
    Ors,
    #[serde(rename = "VRP")]
    Vrp,
    #[serde(rename = "Equal")]
    Equal,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Ors, DatasetKind::Vrp, DatasetKind::Equal];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Ors => "ORS",
            DatasetKind::Vrp => "VRP",
            DatasetKind::Equal => "Equal",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ors" => Ok(DatasetKind::Ors),
            "vrp" => Ok(DatasetKind::Vrp),
            "equal" => Ok(DatasetKind::Equal),
            other => Err(Error::Config(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// One realisation of execution and setup times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Execution time of each job.
    pub exec: Vec<f64>,
    /// `(n + 1) x (n + 1)` setup matrix, index 0 is the dummy job.
    pub setup: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn n_jobs(&self) -> usize {
        self.exec.len()
    }

    #[inline]
    pub fn exec_time(&self, j: usize) -> f64 {
        self.exec[j]
    }

    /// Setup time between two real jobs.
    #[inline]
    pub fn setup_time(&self, from: usize, to: usize) -> f64 {
        self.setup[from + 1][to + 1]
    }

    /// Setup time from a real job back to the dummy end.
    #[inline]
    pub fn closing_time(&self, j: usize) -> f64 {
        self.setup[j + 1][0]
    }

    /// Duration of a machine processing `order` in that order, with closing setup.
    pub fn sequence_time(&self, order: &[usize]) -> f64 {
        let mut total = 0.0;
        for (pos, &j) in order.iter().enumerate() {
            if pos > 0 {
                total += self.setup_time(order[pos - 1], j);
            }
            total += self.exec_time(j);
        }
        if let Some(&last) = order.last() {
            total += self.closing_time(last);
        }
        total
    }
}

/// A chance-constrained scheduling instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub n_jobs: usize,
    pub n_machines: usize,
    pub capacity: usize,
    pub time_limit: f64,
    pub epsilon: f64,
    pub utilities: Vec<f64>,
    pub scenarios: Vec<Scenario>,
    /// Probability of each scenario, `1 / |scenarios|`.
    pub scenario_prob: f64,
    /// Per-scenario constant large enough to deactivate a machine time row.
    pub big_m: Vec<f64>,
    pub seed: Option<u64>,
    pub dataset_kind: Option<DatasetKind>,
    pub dif: Option<f64>,
}

/// On-disk layout of an instance.
#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n_jobs: usize,
    n_machines: usize,
    capacity: usize,
    time_limit: f64,
    epsilon: f64,
    utilities: Vec<f64>,
    scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dataset_kind: Option<DatasetKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dif: Option<f64>,
}

/// A field-level problem found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: String,
    pub detail: String,
}

impl Violation {
    fn new(field: impl Into<String>, detail: impl Into<String>) -> Violation {
        Violation {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.detail)
    }
}

impl Instance {
    /// Assemble an instance from its primary data, deriving the scenario
    /// probability and big-M constants. Fails on inconsistent dimensions.
    pub fn new(
        n_machines: usize,
        capacity: usize,
        time_limit: f64,
        epsilon: f64,
        utilities: Vec<f64>,
        scenarios: Vec<Scenario>,
    ) -> Result<Instance> {
        let n_jobs = utilities.len();
        let mut inst = Instance {
            n_jobs,
            n_machines,
            capacity,
            time_limit,
            epsilon,
            utilities,
            scenario_prob: 0.0,
            big_m: Vec::new(),
            scenarios,
            seed: None,
            dataset_kind: None,
            dif: None,
        };
        inst.finish()?;
        Ok(inst)
    }

    fn finish(&mut self) -> Result<()> {
        let problems = validate_instance(self);
        if !problems.is_empty() {
            let text: Vec<String> = problems.iter().map(|v| v.to_string()).collect();
            return Err(Error::Dimension(text.join("; ")));
        }
        self.scenario_prob = 1.0 / self.scenarios.len() as f64;
        self.big_m = self
            .scenarios
            .iter()
            .map(|s| crate::generate::compute_big_m(s, self.capacity))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    /// Largest per-scenario big-M.
    pub fn big_m_max(&self) -> f64 {
        self.big_m.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest number of satisfied scenarios that meets the chance constraint.
    pub fn required_scenarios(&self) -> usize {
        required_scenarios(self.n_scenarios(), self.epsilon)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            n_jobs: self.n_jobs,
            n_machines: self.n_machines,
            capacity: self.capacity,
            time_limit: self.time_limit,
            epsilon: self.epsilon,
            utilities: self.utilities.clone(),
            scenarios: self.scenarios.clone(),
            seed: self.seed,
            dataset_kind: self.dataset_kind,
            dif: self.dif,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(text)?;
        if file.utilities.len() != file.n_jobs {
            return Err(Error::Dimension(format!(
                "utilities has {} entries, n_jobs is {}",
                file.utilities.len(),
                file.n_jobs
            )));
        }
        let mut inst = Instance {
            n_jobs: file.n_jobs,
            n_machines: file.n_machines,
            capacity: file.capacity,
            time_limit: file.time_limit,
            epsilon: file.epsilon,
            utilities: file.utilities,
            scenarios: file.scenarios,
            scenario_prob: 0.0,
            big_m: Vec::new(),
            seed: file.seed,
            dataset_kind: file.dataset_kind,
            dif: file.dif,
        };
        inst.finish()?;
        Ok(inst)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Instance> {
        Instance::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Smallest `c` with `c / n >= 1 - epsilon` up to [`PROB_TOL`].
pub fn required_scenarios(n_scenarios: usize, epsilon: f64) -> usize {
    if n_scenarios == 0 {
        return 0;
    }
    let p = 1.0 / n_scenarios as f64;
    (0..=n_scenarios)
        .find(|&c| c as f64 * p >= 1.0 - epsilon - PROB_TOL)
        .unwrap_or(n_scenarios)
}

/// Check every structural invariant of an instance and report each breach.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = inst.n_jobs;
    if n == 0 {
        out.push(Violation::new("n_jobs", "must be at least 1"));
    }
    if inst.n_machines == 0 {
        out.push(Violation::new("n_machines", "must be at least 1"));
    }
    if inst.capacity == 0 {
        out.push(Violation::new("capacity", "must be at least 1"));
    }
    if inst.capacity > n {
        out.push(Violation::new(
            "capacity",
            format!("capacity {} exceeds job count {n}", inst.capacity),
        ));
    }
    if !(inst.time_limit > 0.0 && inst.time_limit.is_finite()) {
        out.push(Violation::new("time_limit", "must be positive and finite"));
    }
    if !(inst.epsilon >= 0.0 && inst.epsilon < 1.0) {
        out.push(Violation::new("epsilon", "must lie in [0, 1)"));
    }
    if inst.utilities.len() != n {
        out.push(Violation::new(
            "utilities",
            format!("has {} entries, expected {n}", inst.utilities.len()),
        ));
    }
    for (j, &f) in inst.utilities.iter().enumerate() {
        if !(f > 0.0 && f.is_finite()) {
            out.push(Violation::new(format!("utilities[{j}]"), "must be positive"));
        }
    }
    if inst.scenarios.is_empty() {
        out.push(Violation::new("scenarios", "at least one scenario required"));
    }
    for (w, s) in inst.scenarios.iter().enumerate() {
        if s.exec.len() != n {
            out.push(Violation::new(
                format!("scenarios[{w}].exec"),
                format!("has {} entries, expected {n}", s.exec.len()),
            ));
            continue;
        }
        for (j, &t) in s.exec.iter().enumerate() {
            if !(t >= 0.0 && t.is_finite()) {
                out.push(Violation::new(
                    format!("scenarios[{w}].exec[{j}]"),
                    "must be non-negative",
                ));
            }
        }
        if s.setup.len() != n + 1 || s.setup.iter().any(|row| row.len() != n + 1) {
            out.push(Violation::new(
                format!("scenarios[{w}].setup"),
                format!("must be {0}x{0}", n + 1),
            ));
            continue;
        }
        for i in 0..=n {
            if s.setup[i][i] != 0.0 {
                out.push(Violation::new(
                    format!("scenarios[{w}].setup[{i}][{i}]"),
                    "diagonal must be 0",
                ));
            }
            for k in 0..=n {
                let v = s.setup[i][k];
                if !(v >= 0.0 && v.is_finite()) {
                    out.push(Violation::new(
                        format!("scenarios[{w}].setup[{i}][{k}]"),
                        "must be non-negative",
                    ));
                }
            }
        }
        for a in 0..=n {
            for b in 0..=n {
                for c in 0..=n {
                    if s.setup[a][c] > s.setup[a][b] + s.setup[b][c] + TIME_TOL {
                        out.push(Violation::new(
                            format!("scenarios[{w}].setup"),
                            format!("triangle inequality fails for ({a},{b},{c})"),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// An assignment of jobs to machines plus the scenario indicator vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Candidate {
    /// Machine of each job, `None` when the job is not scheduled.
    pub assignment: Vec<Option<usize>>,
    /// `true` for scenarios the schedule is claimed to satisfy.
    pub z: Vec<bool>,
}

impl Candidate {
    /// Build from a 0/1 matrix `x[job][machine]`, rejecting rows with more than one 1.
    pub fn from_matrix(x: &[Vec<u8>], z: Vec<bool>) -> Result<Candidate> {
        let mut assignment = Vec::with_capacity(x.len());
        for (j, row) in x.iter().enumerate() {
            let ones: Vec<usize> = (0..row.len()).filter(|&m| row[m] != 0).collect();
            match ones.len() {
                0 => assignment.push(None),
                1 => assignment.push(Some(ones[0])),
                _ => {
                    return Err(Error::Contract(format!(
                        "job {} is assigned to {} machines",
                        j + 1,
                        ones.len()
                    )))
                }
            }
        }
        Ok(Candidate { assignment, z })
    }

    pub fn to_matrix(&self, n_machines: usize) -> Vec<Vec<u8>> {
        self.assignment
            .iter()
            .map(|a| (0..n_machines).map(|m| u8::from(*a == Some(m))).collect())
            .collect()
    }

    /// Jobs on machine `m` in increasing order.
    pub fn jobs_on(&self, m: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&j| self.assignment[j] == Some(m))
            .collect()
    }
}

/// Total utility of the scheduled jobs.
pub fn candidate_objective(inst: &Instance, cand: &Candidate) -> f64 {
    cand.assignment
        .iter()
        .zip(&inst.utilities)
        .filter(|(a, _)| a.is_some())
        .map(|(_, f)| f)
        .sum()
}

/// Whether the indicator vector carries at least `1 - epsilon` probability.
pub fn chance_satisfied(inst: &Instance, z: &[bool]) -> bool {
    let mass: f64 = z.iter().filter(|&&b| b).count() as f64 * inst.scenario_prob;
    mass >= 1.0 - inst.epsilon - PROB_TOL
}

/// Family a cut belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutKind {
    NoGood,
    Iis,
    BendersFlow,
}

impl CutKind {
    pub fn name(self) -> &'static str {
        match self {
            CutKind::NoGood => "NoGood",
            CutKind::Iis => "IIS",
            CutKind::BendersFlow => "BendersFlow",
        }
    }
}

/// Coefficients of a flow cut. For every machine `m` it reads
/// `constant + sum_q assign[q] x_qm + sum_q unassign[q] (1 - x_qm) <= T + big_m (1 - z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BendersTerms {
    pub constant: f64,
    pub assign: Vec<f64>,
    pub unassign: Vec<f64>,
    pub big_m: f64,
}

impl BendersTerms {
    /// Left-hand side without the big-M term for one machine's job column.
    pub fn lhs(&self, column: &[bool]) -> f64 {
        let mut v = self.constant;
        for (q, &on) in column.iter().enumerate() {
            v += if on { self.assign[q] } else { self.unassign[q] };
        }
        v
    }
}

/// A constraint linking a job set to a scenario indicator.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    /// Sorted, non-empty set of original job ids.
    pub job_set: Vec<usize>,
    pub scenario: usize,
    pub kind: CutKind,
    pub benders: Option<BendersTerms>,
}

impl Cut {
    pub fn combinatorial(kind: CutKind, scenario: usize, mut job_set: Vec<usize>) -> Cut {
        job_set.sort_unstable();
        Cut {
            job_set,
            scenario,
            kind,
            benders: None,
        }
    }

    /// Whether the cut holds for the given candidate on every machine.
    pub fn satisfied_by(&self, cand: &Candidate, n_machines: usize, time_limit: f64) -> bool {
        if !cand.z[self.scenario] {
            return true;
        }
        for m in 0..n_machines {
            match &self.benders {
                None => {
                    if self.job_set.iter().all(|&j| cand.assignment[j] == Some(m)) {
                        return false;
                    }
                }
                Some(terms) => {
                    let column: Vec<bool> =
                        cand.assignment.iter().map(|a| *a == Some(m)).collect();
                    if terms.lhs(&column) > time_limit + TIME_TOL {
                        return false;
                    }
                }
            }
        }
        true
    }
}
