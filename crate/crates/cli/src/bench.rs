//! Per-run result rows and their aggregation into summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use ccpmsp::decomposition::{SolveReport, CSV_COLUMNS, CSV_VERSION_LINE};

/// Columns identifying the instance, written before the report columns.
pub const INSTANCE_COLUMNS: [&str; 6] = ["instance", "dataset", "n_jobs", "n_machines", "dif", "seed"];
/// Columns written after the report columns.
pub const TRAILING_COLUMNS: [&str; 4] = ["objective", "bound", "verified", "error"];

pub fn run_header() -> String {
    INSTANCE_COLUMNS
        .iter()
        .chain(CSV_COLUMNS.iter())
        .chain(TRAILING_COLUMNS.iter())
        .copied()
        .collect::<Vec<_>>()
        .join(",")
}

/// Identification of one benchmark instance.
#[derive(Clone, Debug)]
pub struct InstanceTag {
    pub name: String,
    pub dataset: String,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub dif: Option<f64>,
    pub seed: Option<u64>,
}

impl InstanceTag {
    fn fields(&self) -> Vec<String> {
        vec![
            self.name.clone(),
            self.dataset.clone(),
            self.n_jobs.to_string(),
            self.n_machines.to_string(),
            self.dif.map_or("na".into(), |d| d.to_string()),
            self.seed.map_or("na".into(), |s| s.to_string()),
        ]
    }
}

pub fn run_row(tag: &InstanceTag, report: &SolveReport, verified: bool) -> String {
    let mut fields = tag.fields();
    fields.extend(report.csv_fields());
    fields.push(report.objective.map_or("none".into(), |o| o.to_string()));
    fields.push(report.bound.to_string());
    fields.push(u8::from(verified).to_string());
    fields.push(String::new());
    fields.join(",")
}

/// Row for a run that failed before producing a report. Its gap is infinite.
pub fn error_row(tag: &InstanceTag, model: &str, cut: &str, elapsed: f64, message: &str) -> String {
    let mut fields = tag.fields();
    fields.extend([model.to_string(), cut.to_string(), format!("{elapsed:.6}"), "inf".into(), "0".into()]);
    fields.extend(std::iter::repeat_n("0".to_string(), CSV_COLUMNS.len() - 5));
    fields.extend(["none".into(), "inf".into(), "0".into()]);
    let clean: String = message.chars().map(|c| if c == ',' || c == '\n' { ';' } else { c }).collect();
    fields.push(clean);
    fields.join(",")
}

/// A row read back from a per-run CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub model: String,
    pub cut: String,
    pub n_machines: usize,
    pub total_time: f64,
    pub gap: f64,
    pub optimal: bool,
    pub n_callbacks: f64,
    pub n_cuts: f64,
    pub resol_time: f64,
    pub resol_time_per_cb: f64,
    pub create_cut_time: f64,
    pub create_sp_time: f64,
}

fn parse_num(s: &str) -> Result<f64> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse::<f64>().with_context(|| format!("bad number `{s}`"))
}

pub fn parse_runs(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("empty results file"))?
        .split(',')
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| anyhow!("results file lacks column `{name}`"))
    };
    let idx = [
        col("model")?,
        col("cut")?,
        col("n_machines")?,
        col("total_time")?,
        col("gap")?,
        col("optimal")?,
        col("n_callbacks")?,
        col("n_cuts")?,
        col("resol_time")?,
        col("resol_time_per_cb")?,
        col("create_cut_time")?,
        col("create_sp_time")?,
    ];
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            bail!("row {} has {} fields, header has {}", n + 2, f.len(), header.len());
        }
        out.push(RunRecord {
            model: f[idx[0]].to_string(),
            cut: f[idx[1]].to_string(),
            n_machines: f[idx[2]].parse().context("bad machine count")?,
            total_time: parse_num(f[idx[3]])?,
            gap: parse_num(f[idx[4]])?,
            optimal: f[idx[5]] == "1",
            n_callbacks: parse_num(f[idx[6]])?,
            n_cuts: parse_num(f[idx[7]])?,
            resol_time: parse_num(f[idx[8]])?,
            resol_time_per_cb: parse_num(f[idx[9]])?,
            create_cut_time: parse_num(f[idx[10]])?,
            create_sp_time: parse_num(f[idx[11]])?,
        });
    }
    Ok(out)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => "na".into(),
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.6}"),
    }
}

/// Summary tables in long form: `table,model,cut,n_machines,metric,value`.
pub fn aggregate(runs: &[RunRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CSV_VERSION_LINE}");
    out.push_str("table,model,cut,n_machines,metric,value\n");
    let mut by_config: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    let mut by_machines: BTreeMap<(String, String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in runs {
        by_config.entry((r.model.clone(), r.cut.clone())).or_default().push(r);
        by_machines
            .entry((r.model.clone(), r.cut.clone(), r.n_machines))
            .or_default()
            .push(r);
    }
    let mut emit = |table: &str, model: &str, cut: &str, machines: &str, metric: &str, value: String| {
        let _ = writeln!(out, "{table},{model},{cut},{machines},{metric},{value}");
    };
    for ((model, cut), rs) in &by_config {
        let gap = if rs.iter().any(|r| r.gap.is_infinite()) {
            "inf".to_string()
        } else {
            fmt_opt(mean(rs.iter().map(|r| r.gap)))
        };
        emit("1", model, cut, "all", "total_time", fmt_opt(mean(rs.iter().map(|r| r.total_time))));
        emit("1", model, cut, "all", "gap", gap);
        emit("1", model, cut, "all", "n_optimal", rs.iter().filter(|r| r.optimal).count().to_string());

        emit(
            "2",
            model,
            cut,
            "all",
            "optimal_time",
            fmt_opt(mean(rs.iter().filter(|r| r.optimal).map(|r| r.total_time))),
        );
        emit(
            "2",
            model,
            cut,
            "all",
            "gap_without_inf",
            fmt_opt(mean(rs.iter().filter(|r| r.gap.is_finite()).map(|r| r.gap))),
        );
        emit("2", model, cut, "all", "n_inf", rs.iter().filter(|r| r.gap.is_infinite()).count().to_string());

        for (metric, get) in [
            ("n_callbacks", (|r: &RunRecord| r.n_callbacks) as fn(&RunRecord) -> f64),
            ("n_cuts", |r| r.n_cuts),
            ("resol_time", |r| r.resol_time),
            ("resol_time_per_cb", |r| r.resol_time_per_cb),
            ("create_cut_time", |r| r.create_cut_time),
            ("create_sp_time", |r| r.create_sp_time),
        ] {
            emit("3", model, cut, "all", metric, fmt_opt(mean(rs.iter().map(|r| get(r)))));
        }
    }
    for ((model, cut, machines), rs) in &by_machines {
        let m = machines.to_string();
        emit("4", model, cut, &m, "n_problems", rs.len().to_string());
        emit("4", model, cut, &m, "n_optimal", rs.iter().filter(|r| r.optimal).count().to_string());
        emit("4", model, cut, &m, "total_time", fmt_opt(mean(rs.iter().map(|r| r.total_time))));
    }
    out
}
