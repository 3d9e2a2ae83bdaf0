//! Run configuration files: strict JSON, resolved into a problem and a study plan.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taps_core::function::SeparableFunction;
use taps_core::grid::BasisConfig;
use taps_core::mms::StudyPlan;
use taps_core::problem::{preset, LinearSolver, ProblemSpec};

use crate::factors::FactorFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Study,
    OracleCompare,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Solve => "solve",
            Mode::Study => "study",
            Mode::OracleCompare => "oracle-compare",
            Mode::Validate => "validate",
        };
        f.write_str(s)
    }
}

/// Partial overrides of the solver parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_subspace: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_nonlinear: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nonlinear: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_solver: Option<LinearSolver>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Elements per dimension at each refinement level.
    pub levels: Vec<usize>,
    /// Basis hyperparameter grid; defaults to the run's basis.
    #[serde(default)]
    pub bases: Vec<BasisConfig<f64>>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub modes: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

/// The file format. Exactly one of `problem` (a preset name) or `spec` (inline) is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ProblemSpec<f64>>,
    /// Elements in every dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisConfig<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
    /// Exact solution per field; the forcing is manufactured from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<BTreeMap<String, SeparableFunction<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub factor_format: FactorFormat,
}

/// A configuration problem, located by key path (or line and column for syntax errors).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { location: location.into(), message: message.into() }
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let location = if path.is_empty() || path == "." {
            format!("line {} column {}", inner.line(), inner.column())
        } else {
            format!("{path} (line {} column {})", inner.line(), inner.column())
        };
        ConfigError::new(location, inner.to_string())
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
    parse_config_str(&text)
}

impl RunConfig {
    /// Semantic checks that do not need the problem to be built.
    pub fn check(&self) -> Result<(), ConfigError> {
        match (&self.problem, &self.spec) {
            (Some(_), Some(_)) => return Err(ConfigError::new("problem", "give either `problem` or `spec`, not both")),
            (None, None) => return Err(ConfigError::new("problem", "missing `problem` (preset name) or `spec` (inline problem)")),
            _ => {}
        }
        if self.n == Some(0) {
            return Err(ConfigError::new("n", "must be at least 1"));
        }
        if self.modes == Some(0) {
            return Err(ConfigError::new("M", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }
        if let Some(b) = &self.basis {
            b.validate().map_err(|e| ConfigError::new("basis", e.to_string()))?;
        }
        if self.mode == Mode::Study {
            let study = self.study.as_ref().ok_or_else(|| ConfigError::new("study", "study mode needs a `study` block"))?;
            if study.levels.len() < 2 {
                return Err(ConfigError::new("study.levels", "a study needs ≥ 2 levels"));
            }
            if study.levels[0] == 0 || study.levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::new("study.levels", "levels must be positive and strictly increasing"));
            }
            for (i, b) in study.bases.iter().enumerate() {
                b.validate().map_err(|e| ConfigError::new(format!("study.bases[{i}]"), e.to_string()))?;
            }
            if let Some(m) = &study.modes {
                let m = m.to_vec();
                if m.contains(&0) {
                    return Err(ConfigError::new("study.M", "must be at least 1"));
                }
                if m.len() > 1 && m.len() != study.levels.len() {
                    return Err(ConfigError::new("study.M", "give one mode count or one per level"));
                }
            }
            if self.exact.is_none() {
                return Err(ConfigError::new("exact", "study mode needs an exact solution"));
            }
        } else if self.study.is_some() {
            return Err(ConfigError::new("study", format!("a `study` block is only used in study mode, not {}", self.mode)));
        }
        Ok(())
    }

    /// The problem with every override applied (forcing not yet manufactured).
    pub fn base_spec(&self) -> Result<ProblemSpec<f64>, ConfigError> {
        let mut spec = match (&self.problem, &self.spec) {
            (Some(name), _) => preset::<f64>(name).map_err(|e| ConfigError::new("problem", e.to_string()))?,
            (None, Some(s)) => s.clone(),
            (None, None) => return Err(ConfigError::new("problem", "missing")),
        };
        if let Some(n) = self.n {
            spec = spec.refined(n);
        }
        if let Some(b) = self.basis {
            spec = spec.with_basis(b);
        }
        if let Some(m) = self.modes {
            spec.solver.modes = m;
        }
        if let Some(seed) = self.seed {
            spec.solver.seed = seed;
        }
        if let Some(o) = &self.solver {
            let s = &mut spec.solver;
            s.tol_subspace = o.tol_subspace.unwrap_or(s.tol_subspace);
            s.max_sweeps = o.max_sweeps.unwrap_or(s.max_sweeps);
            s.tol_nonlinear = o.tol_nonlinear.unwrap_or(s.tol_nonlinear);
            s.max_nonlinear = o.max_nonlinear.unwrap_or(s.max_nonlinear);
            s.linear_solver = o.linear_solver.unwrap_or(s.linear_solver);
        }
        Ok(spec)
    }

    /// The problem to solve: forcing manufactured from `exact` when one is given.
    pub fn resolved_spec(&self) -> Result<ProblemSpec<f64>, ConfigError> {
        let spec = self.base_spec()?;
        match &self.exact {
            Some(exact) => taps_core::problem::manufacture(&spec, exact).map_err(|e| ConfigError::new("exact", e.to_string())),
            None => Ok(spec),
        }
    }

    pub fn study_plan(&self) -> Result<StudyPlan<f64>, ConfigError> {
        let study = self.study.as_ref().ok_or_else(|| ConfigError::new("study", "missing"))?;
        let exact = self.exact.clone().ok_or_else(|| ConfigError::new("exact", "missing"))?;
        let base = self.base_spec()?;
        let bases = if study.bases.is_empty() {
            vec![self.basis.unwrap_or_else(|| base.dimensions[0].basis)]
        } else {
            study.bases.clone()
        };
        let mut plan = StudyPlan::new(base, exact, study.levels.clone(), bases);
        plan.modes = study.modes.as_ref().map(|m| m.to_vec()).unwrap_or_default();
        plan.seeds = study.seeds.clone();
        plan.validate().map_err(|e| ConfigError::new("study", e.to_string()))?;
        Ok(plan)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("taps-out"))
    }
}
