//! Executing a parsed configuration and writing its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use taps_core::mms::{hardware_string, run_study, StudyResult};
use taps_core::oracle::oracle_full_solve;
use taps_core::problem::{Diagnostic, ProblemSpec};
use taps_core::solver::{SolveReport, Solver};
use taps_core::td::relative_l2_error;

use crate::config::{Mode, RunConfig};
use crate::factors::{factor_file_name, save_field};

pub const REPORT_FILE: &str = "report.json";
pub const STUDY_FILE: &str = "study.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    Failed,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Failed => 1,
            Status::NotConverged => 2,
        }
    }
}

/// Command-line overrides of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
    }
}

/// Thread count: explicit setting first, then `TAPS_THREADS`, then all cores.
pub fn resolve_threads(cfg: &RunConfig) -> usize {
    cfg.threads
        .or_else(|| std::env::var("TAPS_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// One row of `study.csv`; the column set is fixed.
#[derive(Debug, Clone, Serialize)]
pub struct StudyCsvRow {
    pub preset: String,
    pub p: usize,
    pub s: usize,
    pub a: Option<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub dof_equiv: f64,
    pub rel_l2_error: f64,
    pub rate: Option<f64>,
    pub wall_seconds: f64,
    pub converged: bool,
}

pub const STUDY_COLUMNS: [&str; 11] = ["preset", "p", "s", "a", "M", "n", "dof_equiv", "rel_l2_error", "rate", "wall_seconds", "converged"];

pub fn study_rows(result: &StudyResult) -> Vec<StudyCsvRow> {
    result
        .rows
        .iter()
        .map(|r| StudyCsvRow {
            preset: r.preset.clone(),
            p: r.p,
            s: r.s,
            a: r.a,
            m: r.m,
            n: r.n,
            dof_equiv: r.dof_equiv,
            rel_l2_error: r.rel_l2_error,
            rate: result.rate_for(r).and_then(|e| e.rate),
            wall_seconds: r.wall_seconds,
            converged: r.converged,
        })
        .collect()
}

pub fn write_study_csv(path: &Path, result: &StudyResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in study_rows(result) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareCsvRow {
    pub preset: String,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub dof_equiv: f64,
    pub rel_l2_distance: f64,
    pub taps_rel_l2_error: Option<f64>,
    pub oracle_rel_l2_error: Option<f64>,
    pub taps_seconds: f64,
    pub oracle_seconds: f64,
    pub converged: bool,
}

#[derive(Serialize)]
struct SolveLog<'a> {
    mode: Mode,
    config: &'a RunConfig,
    resolved_spec: &'a ProblemSpec<f64>,
    threads: usize,
    hardware: String,
    report: &'a SolveReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_l2_errors: Option<Vec<(String, f64)>>,
    factor_files: Vec<String>,
}

#[derive(Serialize)]
struct StudyLog<'a> {
    mode: Mode,
    config: &'a RunConfig,
    resolved_base_spec: &'a ProblemSpec<f64>,
    threads: usize,
    result: &'a StudyResult,
}

#[derive(Serialize)]
struct CompareLog<'a> {
    mode: Mode,
    config: &'a RunConfig,
    resolved_spec: &'a ProblemSpec<f64>,
    threads: usize,
    hardware: String,
    report: &'a SolveReport,
    comparison: &'a CompareCsvRow,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Structural diagnostics of the configured problem, including forcing manufacture.
pub fn diagnostics(cfg: &RunConfig) -> Vec<Diagnostic> {
    let spec = match cfg.base_spec() {
        Ok(s) => s,
        Err(e) => return vec![Diagnostic::new(e.location, e.message)],
    };
    let mut out = spec.validate();
    if out.is_empty() {
        if let Err(e) = cfg.resolved_spec() {
            out.push(Diagnostic::new(e.location, e.message));
        }
    }
    out
}

/// Run a configuration; errors are reported on stderr and mapped to `Status::Failed`.
pub fn run(cfg: &RunConfig) -> Status {
    match execute(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            Status::Failed
        }
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Status> {
    cfg.check()?;
    let threads = resolve_threads(cfg);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    pool.install(|| match cfg.mode {
        Mode::Validate => Ok(validate(cfg)),
        Mode::Solve => solve(cfg, threads),
        Mode::Study => study(cfg, threads),
        Mode::OracleCompare => compare(cfg, threads),
    })
}

fn validate(cfg: &RunConfig) -> Status {
    let diags = diagnostics(cfg);
    for d in &diags {
        eprintln!("{d}");
    }
    if diags.is_empty() {
        println!("ok");
        Status::Success
    } else {
        Status::Failed
    }
}

fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn status_of(converged: bool) -> Status {
    if converged {
        Status::Success
    } else {
        Status::NotConverged
    }
}

fn solve(cfg: &RunConfig, threads: usize) -> Result<Status> {
    let spec = cfg.resolved_spec()?;
    let dir = prepare_output(cfg)?;
    let sol = Solver::new(&spec)?.solve()?;
    let mut files = Vec::new();
    for f in &sol.fields {
        let name = factor_file_name(&f.name);
        save_field(&dir.join(&name), f, cfg.factor_format)?;
        files.push(name);
    }
    let errors = match &cfg.exact {
        Some(exact) => Some(
            sol.fields
                .iter()
                .filter_map(|f| exact.get(&f.name).map(|g| (f, g)))
                .map(|(f, g)| Ok((f.name.clone(), relative_l2_error(f, g, &sol.spaces)?)))
                .collect::<taps_core::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let log = SolveLog {
        mode: cfg.mode,
        config: cfg,
        resolved_spec: &spec,
        threads,
        hardware: hardware_string(),
        report: &sol.report,
        rel_l2_errors: errors,
        factor_files: files,
    };
    write_json(&dir.join(REPORT_FILE), &log)?;
    println!(
        "{}: converged={} sweeps={} wall={:.3}s -> {}",
        spec.name,
        sol.report.converged,
        sol.report.sweeps,
        sol.report.wall_seconds,
        dir.display()
    );
    Ok(status_of(sol.report.converged))
}

fn study(cfg: &RunConfig, threads: usize) -> Result<Status> {
    let plan = cfg.study_plan()?;
    let dir = prepare_output(cfg)?;
    let result = run_study(&plan)?;
    write_study_csv(&dir.join(STUDY_FILE), &result)?;
    let log = StudyLog { mode: cfg.mode, config: cfg, resolved_base_spec: &plan.base, threads, result: &result };
    write_json(&dir.join(REPORT_FILE), &log)?;
    for r in &result.rates {
        match r.rate {
            Some(rate) => println!("p={} s={}: rate {rate:.3}", r.p, r.s),
            None if r.exact => println!("p={} s={}: exact reproduction", r.p, r.s),
            None => println!("p={} s={}: no rate", r.p, r.s),
        }
    }
    Ok(status_of(result.all_converged()))
}

fn compare(cfg: &RunConfig, threads: usize) -> Result<Status> {
    let spec = cfg.resolved_spec()?;
    let dir = prepare_output(cfg)?;
    let t0 = Instant::now();
    let sol = Solver::new(&spec)?.solve()?;
    let taps_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let oracle = oracle_full_solve(&spec)?;
    let oracle_seconds = t1.elapsed().as_secs_f64();
    let mut dist = 0.0f64;
    let mut taps_err: Option<f64> = None;
    let mut oracle_err: Option<f64> = None;
    for f in &sol.fields {
        let o = oracle.field(&f.name).context("oracle lacks a field")?;
        let norm = o.l2_norm(&oracle.spaces)?;
        let d = o.l2_distance_td(f, &oracle.spaces)?;
        dist = dist.max(if norm > 0.0 { d / norm } else { d });
        if let Some(g) = cfg.exact.as_ref().and_then(|e| e.get(&f.name)) {
            let te = relative_l2_error(f, g, &sol.spaces)?;
            let oe = o.relative_l2_error(g, &oracle.spaces)?;
            taps_err = Some(taps_err.unwrap_or(0.0).max(te));
            oracle_err = Some(oracle_err.unwrap_or(0.0).max(oe));
        }
    }
    let basis = spec.dimensions[0].basis;
    let row = CompareCsvRow {
        preset: spec.name.clone(),
        p: basis.p,
        m: spec.solver.modes,
        n: spec.dimensions[0].n_elements,
        dof_equiv: spec.dof_equiv(),
        rel_l2_distance: dist,
        taps_rel_l2_error: taps_err,
        oracle_rel_l2_error: oracle_err,
        taps_seconds,
        oracle_seconds,
        converged: sol.report.converged,
    };
    let mut w = csv::Writer::from_path(dir.join(COMPARE_FILE))?;
    w.serialize(&row)?;
    w.flush()?;
    let log = CompareLog {
        mode: cfg.mode,
        config: cfg,
        resolved_spec: &spec,
        threads,
        hardware: hardware_string(),
        report: &sol.report,
        comparison: &row,
    };
    write_json(&dir.join(REPORT_FILE), &log)?;
    println!("{}: relative L2 distance to full-order solve {dist:.3e}", spec.name);
    Ok(status_of(sol.report.converged))
}
