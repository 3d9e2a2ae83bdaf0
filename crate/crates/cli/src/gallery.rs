//! Desk-scale reproductions of the reference experiments, stored as fixture configs.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use taps_core::grid::Role;
use taps_core::mms::{run_study, StudyResult};
use taps_core::oracle::oracle_full_solve;
use taps_core::solver::Solver;
use taps_core::td::seeded_rng;

use crate::config::{Mode, RunConfig};

const FIXTURES: &[(&str, &str)] = &[
    ("heat", include_str!("../gallery/heat.json")),
    ("magnetostatics", include_str!("../gallery/magnetostatics.json")),
    ("elasticity", include_str!("../gallery/elasticity.json")),
    ("nonlinear_reaction", include_str!("../gallery/nonlinear_reaction.json")),
    ("heterogeneous", include_str!("../gallery/heterogeneous.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRate {
    pub p: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub rates: Vec<ExpectedRate>,
    #[serde(default = "default_tolerance")]
    pub rate_tolerance: f64,
    #[serde(default)]
    pub converged: bool,
}

fn default_tolerance() -> f64 {
    0.4
}

/// Compare the parametric solution, pinned at random parameter values, with full-order solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParametricCheck {
    pub samples: usize,
    pub seed: u64,
    /// Allowed distance as a multiple of the full-order solve's own error.
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalleryEntry {
    pub id: String,
    pub description: String,
    pub budget_seconds: f64,
    pub config: RunConfig,
    pub expect: Expectations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametric_check: Option<ParametricCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GalleryReport {
    pub id: String,
    pub study: Option<StudyResult>,
    pub checks: Vec<Check>,
    pub wall_seconds: f64,
    pub passed: bool,
}

pub fn list_gallery() -> Vec<GalleryEntry> {
    FIXTURES
        .iter()
        .map(|(id, text)| {
            let e: GalleryEntry = serde_json::from_str(text).unwrap_or_else(|err| panic!("gallery fixture `{id}`: {err}"));
            e
        })
        .collect()
}

pub fn gallery_entry(id: &str) -> Result<GalleryEntry> {
    list_gallery()
        .into_iter()
        .find(|e| e.id == id)
        .with_context(|| format!("no gallery entry `{id}`"))
}

/// Run an entry and evaluate its expectations.
pub fn run_gallery(entry: &GalleryEntry) -> Result<GalleryReport> {
    entry.config.check()?;
    let start = Instant::now();
    let mut checks = Vec::new();
    let mut study = None;
    match entry.config.mode {
        Mode::Study => {
            let plan = entry.config.study_plan()?;
            let result = run_study(&plan)?;
            for exp in &entry.expect.rates {
                let got = result.rates.iter().find(|r| r.p == exp.p).and_then(|r| r.rate);
                let value = got.unwrap_or(f64::NAN);
                checks.push(Check {
                    name: format!("rate p={}", exp.p),
                    value,
                    bound: format!("{} ± {}", exp.rate, entry.expect.rate_tolerance),
                    passed: (value - exp.rate).abs() <= entry.expect.rate_tolerance,
                });
            }
            if entry.expect.converged {
                let n_bad = result.rows.iter().filter(|r| !r.converged).count();
                checks.push(Check { name: "unconverged cells".into(), value: n_bad as f64, bound: "= 0".into(), passed: n_bad == 0 });
            }
            study = Some(result);
        }
        Mode::Solve => {
            let spec = entry.config.resolved_spec()?;
            let solver = Solver::new(&spec)?;
            let sol = solver.solve()?;
            if entry.expect.converged {
                checks.push(Check {
                    name: "converged".into(),
                    value: f64::from(u8::from(sol.report.converged)),
                    bound: "= 1".into(),
                    passed: sol.report.converged,
                });
            }
            if let Some(pc) = &entry.parametric_check {
                let exact = entry.config.exact.as_ref().context("parametric check needs an exact solution")?;
                let params: Vec<_> = spec.dimensions.iter().filter(|d| d.role == Role::Parametric).collect();
                if params.is_empty() {
                    bail!("parametric check on a problem without parametric dimensions");
                }
                let mut rng = seeded_rng(pc.seed);
                for k in 0..pc.samples {
                    let values: BTreeMap<String, f64> =
                        params.iter().map(|d| (d.name.clone(), rng.random_range(d.lo..=d.hi))).collect();
                    let pinned = spec.fix_dimensions(&values)?;
                    let oracle = oracle_full_solve(&pinned)?;
                    for f in &sol.fields {
                        let td = f.fix_dimensions(&sol.spaces, &values)?;
                        let o = oracle.field(&f.name).context("oracle lacks a field")?;
                        let g = exact.get(&f.name).context("no exact solution for a field")?.fix_dimensions(&values);
                        let own = o.relative_l2_error(&g, &oracle.spaces)?;
                        let dist = o.l2_distance_td(&td, &oracle.spaces)? / o.l2_norm(&oracle.spaces)?;
                        checks.push(Check {
                            name: format!("sample {k} field {}: distance / full-order error", f.name),
                            value: dist / own,
                            bound: format!("<= {}", pc.factor),
                            passed: dist <= pc.factor * own,
                        });
                    }
                }
            }
        }
        other => bail!("gallery entries run in study or solve mode, not {other}"),
    }
    let wall = start.elapsed().as_secs_f64();
    let passed = checks.iter().all(|c| c.passed);
    Ok(GalleryReport { id: entry.id.clone(), study, checks, wall_seconds: wall, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_parse_and_validate() {
        let entries = list_gallery();
        assert_eq!(entries.len(), FIXTURES.len());
        for e in &entries {
            e.config.check().unwrap();
            assert!(crate::run::diagnostics(&e.config).is_empty(), "{}", e.id);
        }
    }
}
