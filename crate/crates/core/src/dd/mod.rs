//! Exact decision diagrams over job sequences.
//!
//! A diagram over `k` canonical jobs has `k + 1` node layers. Every root to
//! terminal path visits each job once, so paths and permutations coincide.
//! Arc costs are not stored; they are evaluated against a [`LocalTimes`]
//! table built for one scenario and one job set.

pub mod job_set;
pub mod last_job;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::model::{JobMask, Scenario};

pub use job_set::{js_iis, js_min_time, js_transition, JobSetSpec};
pub use last_job::{lj_iis, lj_min_time, lj_node_times, lj_transition, LastJobSpec};

/// Largest canonical job count a sequencing diagram may be built for.
pub const MAX_DIAGRAM_JOBS: usize = 20;

/// State abstraction used by a sequencing diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DdVariant {
    /// States are (scheduled set, last job).
    LastJob,
    /// States are the scheduled set only.
    JobSet,
}

impl DdVariant {
    pub fn name(self) -> &'static str {
        match self {
            DdVariant::LastJob => "DD-LJ",
            DdVariant::JobSet => "DD-JS",
        }
    }
}

/// Node state. `last` is always `None` for job-set diagrams and at the root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DdState {
    pub set: JobMask,
    pub last: Option<u8>,
}

impl DdState {
    pub const ROOT: DdState = DdState {
        set: JobMask::EMPTY,
        last: None,
    };
}

/// Transition system a diagram is compiled from.
pub trait StateSpec {
    fn variant(&self) -> DdVariant;
    fn n_jobs(&self) -> usize;
    fn initial(&self) -> DdState {
        DdState::ROOT
    }
    /// Jobs that may extend `state`, in increasing order.
    fn domain(&self, state: &DdState) -> Vec<usize> {
        (0..self.n_jobs())
            .filter(|&j| !state.set.contains(j))
            .collect()
    }
    fn transition(&self, state: &DdState, job: usize) -> DdState;
    fn terminal(&self) -> DdState {
        DdState {
            set: JobMask::full(self.n_jobs()),
            last: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DdNode {
    pub layer: usize,
    pub state: DdState,
    pub in_arcs: Vec<usize>,
    pub out_arcs: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DdArc {
    pub from: usize,
    pub to: usize,
    /// Canonical job scheduled by this arc.
    pub job: usize,
}

/// A compiled sequencing diagram. Nodes are stored layer by layer, each layer
/// ordered by state.
#[derive(Clone, Debug)]
pub struct Diagram {
    variant: DdVariant,
    k: usize,
    nodes: Vec<DdNode>,
    arcs: Vec<DdArc>,
    layer_start: Vec<usize>,
}

impl Diagram {
    pub fn variant(&self) -> DdVariant {
        self.variant
    }

    /// Number of canonical jobs.
    pub fn n_jobs(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[DdNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[DdArc] {
        &self.arcs
    }

    pub fn n_layers(&self) -> usize {
        self.layer_start.len() - 1
    }

    /// Node ids of layer `p`, 0 being the root layer.
    pub fn layer(&self, p: usize) -> std::ops::Range<usize> {
        self.layer_start[p]..self.layer_start[p + 1]
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        (0..self.n_layers()).map(|p| self.layer(p).len()).collect()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn terminal(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dd {\n  rankdir=TB;\n");
        for (id, n) in self.nodes.iter().enumerate() {
            let label = match n.state.last {
                Some(l) => format!("{} / {}", n.state.set, l + 1),
                None => n.state.set.to_string(),
            };
            let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
        }
        for a in &self.arcs {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", a.from, a.to, a.job + 1);
        }
        out.push_str("}\n");
        out
    }
}

/// Compile a diagram layer by layer, merging nodes with equal states.
pub fn build_top_down<S: StateSpec>(spec: &S) -> Result<Diagram> {
    let k = spec.n_jobs();
    if k == 0 {
        return Err(Error::Contract("a diagram needs at least one job".into()));
    }
    if k > MAX_DIAGRAM_JOBS {
        return Err(Error::UnsupportedScale(format!(
            "diagram over {k} jobs exceeds the limit of {MAX_DIAGRAM_JOBS}"
        )));
    }
    let mut layers: Vec<Vec<DdState>> = vec![vec![spec.initial()]];
    // arcs per transition layer as (from index, to index, job) within layers
    let mut layer_arcs: Vec<Vec<(usize, usize, usize)>> = Vec::with_capacity(k);
    for p in 0..k {
        let last_step = p + 1 == k;
        let mut index: HashMap<DdState, usize> = HashMap::new();
        let mut next: Vec<DdState> = Vec::new();
        let mut arcs = Vec::new();
        for (i, state) in layers[p].iter().enumerate() {
            for job in spec.domain(state) {
                let target = if last_step {
                    spec.terminal()
                } else {
                    spec.transition(state, job)
                };
                let t = *index.entry(target).or_insert_with(|| {
                    next.push(target);
                    next.len() - 1
                });
                arcs.push((i, t, job));
            }
        }
        let mut order: Vec<usize> = (0..next.len()).collect();
        order.sort_by_key(|&i| next[i]);
        let mut rank = vec![0; next.len()];
        for (new, &old) in order.iter().enumerate() {
            rank[old] = new;
        }
        for a in &mut arcs {
            a.1 = rank[a.1];
        }
        layers.push(order.iter().map(|&i| next[i]).collect());
        layer_arcs.push(arcs);
    }

    let mut layer_start = Vec::with_capacity(layers.len() + 1);
    let mut nodes = Vec::new();
    for (p, states) in layers.iter().enumerate() {
        layer_start.push(nodes.len());
        nodes.extend(states.iter().map(|&state| DdNode {
            layer: p,
            state,
            in_arcs: Vec::new(),
            out_arcs: Vec::new(),
        }));
    }
    layer_start.push(nodes.len());
    let mut arcs = Vec::new();
    for (p, list) in layer_arcs.iter().enumerate() {
        for &(i, t, job) in list {
            let id = arcs.len();
            let from = layer_start[p] + i;
            let to = layer_start[p + 1] + t;
            arcs.push(DdArc { from, to, job });
            nodes[from].out_arcs.push(id);
            nodes[to].in_arcs.push(id);
        }
    }
    Ok(Diagram {
        variant: spec.variant(),
        k,
        nodes,
        arcs,
        layer_start,
    })
}

/// Build the diagram of the given variant over `k` canonical jobs.
pub fn build_diagram(variant: DdVariant, k: usize) -> Result<Diagram> {
    match variant {
        DdVariant::LastJob => build_top_down(&LastJobSpec::new(k)),
        DdVariant::JobSet => build_top_down(&JobSetSpec::new(k)),
    }
}

/// Mapping from canonical positions `0..k` to original job ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Remap {
    originals: Vec<usize>,
}

impl Remap {
    pub fn len(&self) -> usize {
        self.originals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.originals.is_empty()
    }

    pub fn original(&self, canonical: usize) -> usize {
        self.originals[canonical]
    }

    pub fn originals(&self) -> &[usize] {
        &self.originals
    }

    /// Translate a canonical set into sorted original ids.
    pub fn to_original(&self, set: JobMask) -> Vec<usize> {
        set.iter().map(|c| self.originals[c]).collect()
    }
}

/// Order a job set and number it `0..k`. Duplicates are rejected.
pub fn canonical_remap(jobs: &[usize]) -> Result<Remap> {
    let mut originals = jobs.to_vec();
    originals.sort_unstable();
    if let Some(w) = originals.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateJob(w[0]));
    }
    Ok(Remap { originals })
}

/// Execution, setup and closing times of one job set in one scenario,
/// indexed canonically.
#[derive(Clone, Debug)]
pub struct LocalTimes {
    pub exec: Vec<f64>,
    pub setup: Vec<Vec<f64>>,
    pub closing: Vec<f64>,
}

impl LocalTimes {
    pub fn new(scenario: &Scenario, remap: &Remap) -> LocalTimes {
        let o = remap.originals();
        LocalTimes {
            exec: o.iter().map(|&j| scenario.exec_time(j)).collect(),
            setup: o
                .iter()
                .map(|&a| o.iter().map(|&b| scenario.setup_time(a, b)).collect())
                .collect(),
            closing: o.iter().map(|&j| scenario.closing_time(j)).collect(),
        }
    }

    pub fn n_jobs(&self) -> usize {
        self.exec.len()
    }
}

/// Shortest root to terminal time, i.e. the best makespan of the job set.
pub fn min_completion_time(diagram: &Diagram, times: &LocalTimes) -> Result<f64> {
    if times.n_jobs() != diagram.n_jobs() {
        return Err(Error::Dimension(format!(
            "diagram over {} jobs evaluated with {} jobs",
            diagram.n_jobs(),
            times.n_jobs()
        )));
    }
    Ok(match diagram.variant() {
        DdVariant::LastJob => lj_min_time(diagram, times),
        DdVariant::JobSet => js_min_time(diagram, times),
    })
}

/// Minimal infeasible subsets of the job set, in canonical numbering,
/// ordered by size then bit pattern.
pub fn extract_iis(diagram: &Diagram, times: &LocalTimes, time_limit: f64) -> Result<Vec<JobMask>> {
    if times.n_jobs() != diagram.n_jobs() {
        return Err(Error::Dimension(format!(
            "diagram over {} jobs evaluated with {} jobs",
            diagram.n_jobs(),
            times.n_jobs()
        )));
    }
    Ok(match diagram.variant() {
        DdVariant::LastJob => lj_iis(diagram, times, time_limit),
        DdVariant::JobSet => js_iis(diagram, times, time_limit, true),
    })
}

/// A diagram built at most once, on first use.
type LazyDiagram = Arc<OnceLock<Arc<Diagram>>>;

/// Diagrams shared across machines and scenarios, keyed by variant and size.
pub struct DiagramCache {
    max_jobs: usize,
    slots: Mutex<HashMap<(DdVariant, usize), LazyDiagram>>,
}

impl DiagramCache {
    /// Cache that accepts job counts up to `max_jobs` (the machine capacity).
    pub fn new(max_jobs: usize) -> DiagramCache {
        DiagramCache {
            max_jobs,
            slots: Mutex::new(HashMap::new()),
        }
    }

    /// Return the cached diagram, building it on first use. Concurrent
    /// callers for the same key wait for a single build.
    pub fn get(&self, variant: DdVariant, k: usize) -> Result<Arc<Diagram>> {
        if k == 0 || k > self.max_jobs {
            return Err(Error::Contract(format!(
                "diagram size {k} outside 1..={}",
                self.max_jobs
            )));
        }
        let slot = {
            let mut slots = self.slots.lock().expect("diagram cache poisoned");
            slots.entry((variant, k)).or_default().clone()
        };
        if let Some(d) = slot.get() {
            return Ok(d.clone());
        }
        let built = Arc::new(build_diagram(variant, k)?);
        Ok(slot.get_or_init(|| built).clone())
    }

    pub fn len(&self) -> usize {
        let slots = self.slots.lock().expect("diagram cache poisoned");
        slots.values().filter(|s| s.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, r: usize) -> usize {
        if r > n {
            return 0;
        }
        (0..r).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn three_job_layer_shapes() {
        let lj = build_diagram(DdVariant::LastJob, 3).unwrap();
        let js = build_diagram(DdVariant::JobSet, 3).unwrap();
        assert_eq!(lj.layer_sizes(), vec![1, 3, 6, 1]);
        assert_eq!(js.layer_sizes(), vec![1, 3, 3, 1]);
    }

    #[test]
    fn layer_sizes_follow_binomials() {
        for k in 1..=8 {
            let lj = build_diagram(DdVariant::LastJob, k).unwrap();
            let js = build_diagram(DdVariant::JobSet, k).unwrap();
            for p in 1..=k {
                assert_eq!(lj.layer(p - 1).len(), binom(k, p - 1) * (p - 1).max(1));
                assert_eq!(js.layer(p - 1).len(), binom(k, p - 1));
            }
            assert_eq!(lj.layer(k).len(), 1);
            assert_eq!(js.layer(k).len(), 1);
        }
    }

    #[test]
    fn paths_are_permutations() {
        for variant in [DdVariant::LastJob, DdVariant::JobSet] {
            let d = build_diagram(variant, 4).unwrap();
            let mut seqs = Vec::new();
            let mut stack = vec![(d.root(), Vec::new())];
            while let Some((n, seq)) = stack.pop() {
                if n == d.terminal() {
                    seqs.push(seq);
                    continue;
                }
                for &a in &d.nodes()[n].out_arcs {
                    let mut s = seq.clone();
                    s.push(d.arcs()[a].job);
                    stack.push((d.arcs()[a].to, s));
                }
            }
            seqs.sort();
            seqs.dedup();
            assert_eq!(seqs.len(), 24);
            assert!(seqs.iter().all(|s| {
                let mut t = s.clone();
                t.sort();
                t == vec![0, 1, 2, 3]
            }));
        }
    }

    #[test]
    fn remap_sorts_and_rejects_duplicates() {
        let r = canonical_remap(&[7, 2, 5]).unwrap();
        assert_eq!(r.originals(), &[2, 5, 7]);
        assert_eq!(r.to_original(JobMask::from_jobs([0, 2])), vec![2, 7]);
        assert!(matches!(canonical_remap(&[3, 1, 3]), Err(Error::DuplicateJob(3))));
    }

    #[test]
    fn cache_shares_and_bounds() {
        let cache = DiagramCache::new(4);
        let a = cache.get(DdVariant::JobSet, 3).unwrap();
        let b = cache.get(DdVariant::JobSet, 3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(cache.get(DdVariant::JobSet, 5).is_err());
        assert!(cache.get(DdVariant::LastJob, 0).is_err());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn dot_lists_every_arc() {
        let d = build_diagram(DdVariant::JobSet, 2).unwrap();
        let dot = d.to_dot();
        assert!(dot.starts_with("digraph"));
        assert_eq!(dot.matches("->").count(), d.arcs().len());
    }
}
