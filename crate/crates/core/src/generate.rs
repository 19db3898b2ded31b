//! Random instance generation.
//!
//! Every random draw comes from its own ChaCha stream keyed by
//! (purpose, scenario, item), so results depend only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::model::{DatasetKind, Instance, Scenario};

/// Mean/standard deviation pairs of one dataset family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetParams {
    pub exec_mu: f64,
    pub exec_sigma: f64,
    pub setup_mu: f64,
    pub setup_sigma: f64,
}

impl DatasetKind {
    pub fn params(self) -> DatasetParams {
        match self {
            DatasetKind::Ors => DatasetParams {
                exec_mu: 2.0,
                exec_sigma: 0.6,
                setup_mu: 0.5,
                setup_sigma: 0.15,
            },
            DatasetKind::Vrp => DatasetParams {
                exec_mu: 0.5,
                exec_sigma: 0.15,
                setup_mu: 2.0,
                setup_sigma: 0.6,
            },
            DatasetKind::Equal => DatasetParams {
                exec_mu: 1.25,
                exec_sigma: 0.375,
                setup_mu: 1.25,
                setup_sigma: 0.375,
            },
        }
    }
}

/// Region the base points of the setup geometry are drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SamplingRegion {
    #[default]
    UnitSquare,
    UnitDisc,
}

/// Parameters of [`make_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub kind: DatasetKind,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub n_scenarios: usize,
    pub dif: f64,
    pub epsilon: f64,
    /// Defaults to `n_jobs / n_machines` when unset.
    pub capacity: Option<usize>,
    pub region: SamplingRegion,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(kind: DatasetKind, n_jobs: usize, n_machines: usize, dif: f64, seed: u64) -> Self {
        GenConfig {
            kind,
            n_jobs,
            n_machines,
            n_scenarios: 100,
            dif,
            epsilon: 0.05,
            capacity: None,
            region: SamplingRegion::UnitSquare,
            seed,
        }
    }
}

const STREAM_EXEC: u64 = 1;
const STREAM_BASE: u64 = 2;
const STREAM_SHIFT: u64 = 3;
const STREAM_UTILITY: u64 = 4;

fn stream_rng(seed: u64, purpose: u64, scenario: u64, item: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(purpose << 56 | (scenario & 0xff_ffff) << 32 | (item & 0xffff_ffff));
    rng
}

/// Log-normal with the given arithmetic mean and standard deviation.
fn lognormal_from_moments(mu: f64, sigma: f64) -> Result<LogNormal<f64>> {
    if !(mu > 0.0 && sigma > 0.0) {
        return Err(Error::Config(format!(
            "log-normal needs positive mean and deviation, got ({mu}, {sigma})"
        )));
    }
    let var_n = (1.0 + sigma * sigma / (mu * mu)).ln();
    let mu_n = mu.ln() - var_n / 2.0;
    LogNormal::new(mu_n, var_n.sqrt()).map_err(|e| Error::Config(e.to_string()))
}

/// Execution times `[scenario][job]`.
pub fn gen_execution_times(
    n_jobs: usize,
    n_scenarios: usize,
    mu: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let dist = lognormal_from_moments(mu, sigma)?;
    Ok((0..n_scenarios)
        .map(|w| {
            (0..n_jobs)
                .map(|j| dist.sample(&mut stream_rng(seed, STREAM_EXEC, w as u64, j as u64)))
                .collect()
        })
        .collect())
}

fn sample_point(rng: &mut ChaCha20Rng, region: SamplingRegion) -> (f64, f64) {
    match region {
        SamplingRegion::UnitSquare => (rng.random::<f64>(), rng.random::<f64>()),
        SamplingRegion::UnitDisc => {
            let r = rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            (r * a.cos(), r * a.sin())
        }
    }
}

fn mean_pairwise_distance(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let mut total = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            total += (points[a].0 - points[b].0).hypot(points[a].1 - points[b].1);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn distance_matrix(points: &[(f64, f64)]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|q| (p.0 - q.0).hypot(p.1 - q.1))
                .collect()
        })
        .collect()
}

/// Base points (index 0 is the dummy) scaled to the requested mean distance.
pub fn gen_base_points(
    n_jobs: usize,
    mu: f64,
    region: SamplingRegion,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if mu <= 0.0 {
        return Err(Error::Config(format!("setup mean must be positive, got {mu}")));
    }
    let mut points: Vec<(f64, f64)> = (0..=n_jobs)
        .map(|i| sample_point(&mut stream_rng(seed, STREAM_BASE, 0, i as u64), region))
        .collect();
    if points.len() > 1 {
        let mean = mean_pairwise_distance(&points);
        if mean > 0.0 {
            let scale = mu / mean;
            for p in &mut points {
                p.0 *= scale;
                p.1 *= scale;
            }
        }
    }
    Ok(points)
}

/// Setup matrices `[scenario]`, each `(n + 1) x (n + 1)` with the dummy at index 0.
///
/// Each scenario moves every base point by a half-normal distance in a
/// uniformly random direction, then takes Euclidean distances.
pub fn gen_setup_times(
    n_jobs: usize,
    n_scenarios: usize,
    mu: f64,
    sigma: f64,
    region: SamplingRegion,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if sigma < 0.0 {
        return Err(Error::Config(format!(
            "setup deviation must be non-negative, got {sigma}"
        )));
    }
    let base = gen_base_points(n_jobs, mu, region, seed)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..n_scenarios)
        .map(|w| {
            let moved: Vec<(f64, f64)> = base
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| {
                    if sigma == 0.0 {
                        return (x, y);
                    }
                    let mut rng = stream_rng(seed, STREAM_SHIFT, w as u64, i as u64);
                    let radius = normal.sample(&mut rng).abs();
                    let angle = rng.random::<f64>() * std::f64::consts::TAU;
                    (x + radius * angle.cos(), y + radius * angle.sin())
                })
                .collect();
            distance_matrix(&moved)
        })
        .collect())
}

/// Integer utilities drawn uniformly from 1..=10.
pub fn gen_utilities(n_jobs: usize, seed: u64) -> Vec<f64> {
    (0..n_jobs)
        .map(|j| {
            stream_rng(seed, STREAM_UTILITY, 0, j as u64).random_range(1..=10u32) as f64
        })
        .collect()
}

/// Machine time limit `2.5 B + 0.3 dif`.
pub fn compute_time_limit(capacity: usize, dif: f64) -> f64 {
    2.5 * capacity as f64 + dif * 0.3
}

/// Sum of the `capacity` largest `exec + max outgoing setup` values.
pub fn compute_big_m(scenario: &Scenario, capacity: usize) -> Result<f64> {
    let n = scenario.n_jobs();
    if capacity > n {
        return Err(Error::Config(format!(
            "capacity {capacity} exceeds job count {n}"
        )));
    }
    let mut spans: Vec<f64> = (0..n)
        .map(|j| {
            let worst_setup = (0..n)
                .filter(|&k| k != j)
                .map(|k| scenario.setup_time(j, k))
                .fold(0.0, f64::max);
            scenario.exec_time(j) + worst_setup
        })
        .collect();
    spans.sort_by(|a, b| b.total_cmp(a));
    Ok(spans[..capacity].iter().sum())
}

/// Generate a complete instance.
pub fn make_instance(cfg: &GenConfig) -> Result<Instance> {
    if cfg.n_jobs == 0 || cfg.n_machines == 0 || cfg.n_scenarios == 0 {
        return Err(Error::Config(
            "jobs, machines and scenarios must all be positive".into(),
        ));
    }
    let capacity = match cfg.capacity {
        Some(b) => b,
        None => {
            if !cfg.n_jobs.is_multiple_of(cfg.n_machines) {
                return Err(Error::Config(format!(
                    "{} jobs do not split evenly over {} machines; give a capacity",
                    cfg.n_jobs, cfg.n_machines
                )));
            }
            cfg.n_jobs / cfg.n_machines
        }
    };
    let p = cfg.kind.params();
    let exec = gen_execution_times(cfg.n_jobs, cfg.n_scenarios, p.exec_mu, p.exec_sigma, cfg.seed)?;
    let setup = gen_setup_times(
        cfg.n_jobs,
        cfg.n_scenarios,
        p.setup_mu,
        p.setup_sigma,
        cfg.region,
        cfg.seed,
    )?;
    let scenarios = exec
        .into_iter()
        .zip(setup)
        .map(|(exec, setup)| Scenario { exec, setup })
        .collect();
    let mut inst = Instance::new(
        cfg.n_machines,
        capacity,
        compute_time_limit(capacity, cfg.dif),
        cfg.epsilon,
        gen_utilities(cfg.n_jobs, cfg.seed),
        scenarios,
    )?;
    inst.seed = Some(cfg.seed);
    inst.dataset_kind = Some(cfg.kind);
    inst.dif = Some(cfg.dif);
    Ok(inst)
}
