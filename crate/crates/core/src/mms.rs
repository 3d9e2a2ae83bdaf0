//! Manufactured-solution convergence studies and rate fitting.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapsError};
use crate::function::SeparableFunction;
use crate::grid::BasisConfig;
use crate::problem::{manufacture, ProblemSpec};
use crate::scalar::Scalar;
use crate::solver::{SolveReport, Solver};
use crate::td::relative_l2_error;

/// Errors at or below this level count as exact reproduction; no rate is fitted.
pub const EXACT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct StudyPlan<T> {
    pub base: ProblemSpec<T>,
    /// Exact solution per field; the forcing is manufactured from it.
    pub exact: BTreeMap<String, SeparableFunction<T>>,
    /// Elements per dimension, applied to every dimension at once.
    pub levels: Vec<usize>,
    pub bases: Vec<BasisConfig<T>>,
    /// Empty: keep the spec's M. One entry: fixed M. Otherwise one entry per level.
    pub modes: Vec<usize>,
    /// One repetition per seed; empty means the spec's seed.
    pub seeds: Vec<u64>,
}

impl<T: Scalar> StudyPlan<T> {
    pub fn new(base: ProblemSpec<T>, exact: BTreeMap<String, SeparableFunction<T>>, levels: Vec<usize>, bases: Vec<BasisConfig<T>>) -> Self {
        Self { base, exact, levels, bases, modes: Vec::new(), seeds: Vec::new() }
    }

    pub fn with_modes(mut self, m: usize) -> Self {
        self.modes = vec![m];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() < 2 {
            return Err(TapsError::InvalidProblem("a study needs at least 2 levels".into()));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) || self.levels[0] == 0 {
            return Err(TapsError::InvalidProblem("levels must be positive and strictly increasing".into()));
        }
        if self.bases.is_empty() {
            return Err(TapsError::InvalidProblem("a study needs at least one basis configuration".into()));
        }
        for b in &self.bases {
            b.validate()?;
        }
        if !(self.modes.len() <= 1 || self.modes.len() == self.levels.len()) {
            return Err(TapsError::InvalidProblem(format!(
                "{} mode counts for {} levels",
                self.modes.len(),
                self.levels.len()
            )));
        }
        if self.modes.contains(&0) {
            return Err(TapsError::InvalidProblem("M must be at least 1".into()));
        }
        Ok(())
    }

    fn modes_at(&self, level: usize) -> usize {
        match self.modes.len() {
            0 => self.base.solver.modes,
            1 => self.modes[0],
            _ => self.modes[level],
        }
    }

    fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.base.solver.seed]
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub preset: String,
    pub p: usize,
    pub s: usize,
    pub a: Option<f64>,
    #[serde(rename = "M")]
    pub m: usize,
    pub n: usize,
    pub dof_equiv: f64,
    pub rel_l2_error: f64,
    pub wall_seconds: f64,
    pub converged: bool,
    pub seed: u64,
    #[serde(skip)]
    pub report: Option<SolveReport>,
}

/// Fitted rate of one basis configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub p: usize,
    pub s: usize,
    pub a: Option<f64>,
    pub rate: Option<f64>,
    /// All errors at reproduction level; no rate fitted.
    pub exact: bool,
    pub levels_used: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub rates: Vec<RateEntry>,
    pub hardware: String,
}

impl StudyResult {
    /// Rate of the configuration a row belongs to.
    pub fn rate_for(&self, row: &StudyRow) -> Option<&RateEntry> {
        self.rates.iter().find(|r| r.p == row.p && r.s == row.s && r.a == row.a)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// Least-squares slope of `log(error)` against `log(h)`, `h ∝ 1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub used: usize,
    /// Points dropped because their error was zero, negative or not finite.
    pub excluded: usize,
}

pub fn fit_rate(errors: &[f64], ns: &[usize]) -> Result<RateFit> {
    if errors.len() != ns.len() {
        return Err(TapsError::Shape(format!("{} errors for {} levels", errors.len(), ns.len())));
    }
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .zip(ns)
        .filter(|(e, &n)| e.is_finite() && **e > 0.0 && n > 0)
        .map(|(&e, &n)| (-(n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(TapsError::RateFit(pts.len()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(TapsError::RateFit(1));
    }
    Ok(RateFit { rate: sxy / sxx, used: pts.len(), excluded: errors.len() - pts.len() })
}

/// Largest relative L2 error over the fields of a solution.
fn solution_error<T: Scalar>(sol: &crate::solver::Solution<T>, exact: &BTreeMap<String, SeparableFunction<T>>) -> Result<f64> {
    let mut e = 0.0f64;
    for f in &sol.fields {
        let g = exact
            .get(&f.name)
            .ok_or_else(|| TapsError::InvalidProblem(format!("no exact solution for field `{}`", f.name)))?;
        e = e.max(relative_l2_error(f, g, &sol.spaces)?.as_f64());
    }
    Ok(e)
}

/// Build the refined, manufactured spec of one study cell.
pub fn cell_spec<T: Scalar>(plan: &StudyPlan<T>, basis: BasisConfig<T>, level: usize, seed: u64) -> Result<ProblemSpec<T>> {
    let mut spec = plan.base.refined(plan.levels[level]).with_basis(basis).with_modes(plan.modes_at(level));
    spec.solver.seed = seed;
    manufacture(&spec, &plan.exact)
}

/// Solve every (basis, level, seed) cell and fit one rate per basis configuration.
pub fn run_study<T: Scalar>(plan: &StudyPlan<T>) -> Result<StudyResult> {
    plan.validate()?;
    let seeds = plan.seeds();
    let mut cells = Vec::new();
    for (bi, &b) in plan.bases.iter().enumerate() {
        for level in 0..plan.levels.len() {
            for &seed in &seeds {
                cells.push((bi, b, level, seed));
            }
        }
    }
    let rows: Vec<StudyRow> = cells
        .par_iter()
        .map(|&(_, b, level, seed)| {
            let spec = cell_spec(plan, b, level, seed)?;
            let start = Instant::now();
            let sol = Solver::new(&spec)?.solve()?;
            let wall = start.elapsed().as_secs_f64();
            let err = solution_error(&sol, &plan.exact)?;
            Ok(StudyRow {
                preset: plan.base.name.clone(),
                p: b.p,
                s: b.s,
                a: b.a.map(|a| a.as_f64()),
                m: spec.solver.modes,
                n: plan.levels[level],
                dof_equiv: spec.dof_equiv(),
                rel_l2_error: err,
                wall_seconds: wall,
                converged: sol.report.converged,
                seed,
                report: Some(sol.report),
            })
        })
        .collect::<Result<_>>()?;

    let keep = (plan.levels.len() - 1).max(2);
    let used_levels = plan.levels[plan.levels.len() - keep..].to_vec();
    let mut rates = Vec::new();
    for b in &plan.bases {
        let a = b.a.map(|a| a.as_f64());
        let errs: Vec<f64> = used_levels
            .iter()
            .map(|&n| {
                rows.iter()
                    .filter(|r| r.p == b.p && r.s == b.s && r.a == a && r.n == n)
                    .map(|r| r.rel_l2_error)
                    .fold(0.0, f64::max)
            })
            .collect();
        let all: Vec<f64> = rows.iter().filter(|r| r.p == b.p && r.s == b.s && r.a == a).map(|r| r.rel_l2_error).collect();
        let exact = all.iter().all(|&e| e <= EXACT_THRESHOLD);
        let rate = if exact { None } else { fit_rate(&errs, &used_levels).ok().map(|f| f.rate) };
        rates.push(RateEntry { p: b.p, s: b.s, a, rate, exact, levels_used: used_levels.clone() });
    }
    Ok(StudyResult { rows, rates, hardware: hardware_string() })
}

/// Short description of the machine, recorded next to timings.
pub fn hardware_string() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} ({} threads)", std::env::consts::ARCH, std::env::consts::OS, threads)
}
