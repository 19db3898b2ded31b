//! LP-file export and a backend that delegates to an external MILP solver.
//!
//! The solver is invoked as `<command...> <model.lp> <solution.txt>` and must
//! write one `name value` pair per line for the variables it sets.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::process::Command;
use std::time::Instant;

use super::{BackendSolution, MasterBackend, MasterModel, Sense, SolveStatus, Var};
use crate::error::{Error, Result};
use crate::model::Candidate;

/// Environment variable that overrides the configured solver command.
pub const SOLVER_ENV: &str = "CCPMSP_EXTERNAL_SOLVER";

const TERMS_PER_LINE: usize = 8;

fn push_terms(out: &mut String, terms: &[(Var, f64)]) {
    for (i, (v, c)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        if i == 0 {
            if *c < 0.0 {
                let _ = write!(out, " - {} {v}", -c);
            } else {
                let _ = write!(out, " {c} {v}");
            }
        } else if *c < 0.0 {
            let _ = write!(out, " - {} {v}", -c);
        } else {
            let _ = write!(out, " + {c} {v}");
        }
    }
}

/// Render the model in CPLEX LP format with every variable binary.
pub fn write_lp(model: &MasterModel) -> String {
    let mut out = String::from("\\ ccpmsp master\nMaximize\n obj:");
    let obj: Vec<(Var, f64)> = (0..model.n_jobs)
        .flat_map(|j| {
            (0..model.n_machines).map(move |m| (Var::Assign { job: j, machine: m }, model.utilities[j]))
        })
        .collect();
    push_terms(&mut out, &obj);
    out.push_str("\nSubject To\n");
    for row in model.rows() {
        let _ = write!(out, " {}:", row.name);
        push_terms(&mut out, &row.terms);
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {sense} {}", row.rhs);
    }
    out.push_str("Binary\n");
    for j in 0..model.n_jobs {
        for m in 0..model.n_machines {
            let _ = writeln!(out, " {}", Var::Assign { job: j, machine: m });
        }
    }
    for w in 0..model.n_scenarios() {
        let _ = writeln!(out, " {}", Var::Scenario(w));
    }
    out.push_str("End\n");
    out
}

/// Read `name value` pairs; unknown names are ignored, missing ones are 0.
pub fn parse_solution(text: &str, model: &MasterModel) -> Result<Candidate> {
    let mut values: HashMap<&str, f64> = HashMap::new();
    for line in text.lines() {
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value)) = (parts.next(), parts.next()) else {
            continue;
        };
        let Ok(v) = value.parse::<f64>() else {
            continue;
        };
        values.insert(name, v);
    }
    let on = |v: Var| values.get(v.to_string().as_str()).copied().unwrap_or(0.0) > 0.5;
    let mut assignment = vec![None; model.n_jobs];
    for (j, slot) in assignment.iter_mut().enumerate() {
        for m in 0..model.n_machines {
            if on(Var::Assign { job: j, machine: m }) {
                if slot.is_some() {
                    return Err(Error::Backend(format!(
                        "solution places job {} on two machines",
                        j + 1
                    )));
                }
                *slot = Some(m);
            }
        }
    }
    let z = (0..model.n_scenarios()).map(|w| on(Var::Scenario(w))).collect();
    Ok(Candidate { assignment, z })
}

/// Backend that shells out to an external MILP solver.
#[derive(Clone, Debug)]
pub struct ExternalBackend {
    command: Vec<String>,
}

impl ExternalBackend {
    /// Use `configured` unless the override variable is set.
    pub fn from_config(configured: Option<&str>) -> Result<ExternalBackend> {
        let cmd = std::env::var(SOLVER_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .or_else(|| configured.map(str::to_owned))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no external solver configured; set external_solver_cmd or {SOLVER_ENV}"
                ))
            })?;
        ExternalBackend::new(&cmd)
    }

    pub fn new(command: &str) -> Result<ExternalBackend> {
        let command: Vec<String> = command.split_whitespace().map(str::to_owned).collect();
        if command.is_empty() {
            return Err(Error::Config("empty external solver command".into()));
        }
        Ok(ExternalBackend { command })
    }
}

impl MasterBackend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&mut self, model: &MasterModel, _deadline: Instant) -> Result<BackendSolution> {
        let dir = tempfile::tempdir()?;
        let lp_path = dir.path().join("master.lp");
        let sol_path = dir.path().join("master.sol");
        std::fs::write(&lp_path, write_lp(model))?;
        let status = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&lp_path)
            .arg(&sol_path)
            .status()
            .map_err(|e| Error::Backend(format!("cannot run `{}`: {e}", self.command[0])))?;
        if !status.success() {
            return Err(Error::Backend(format!("solver exited with {status}")));
        }
        let text = std::fs::read_to_string(&sol_path)
            .map_err(|e| Error::Backend(format!("solver wrote no solution: {e}")))?;
        let cand = parse_solution(&text, model)?;
        let objective = model.objective(&cand);
        Ok(BackendSolution {
            candidate: Some(cand),
            objective,
            bound: objective,
            status: SolveStatus::Optimal,
            nodes: 0,
        })
    }
}
