//! Subspace (alternating) iteration over dimensions with an outer fixed-point loop.

mod subspace;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{OperatorKind, SpaceSet, UnivariateWeight};
use crate::error::{Result, TapsError};
use crate::linalg::{BandMatrix, KronSum};
use crate::problem::{NonlinearKind, ProblemSpec};
use crate::scalar::Scalar;
use crate::td::{l2_distance, l2_norm, seeded_rng, TdField};

pub use subspace::{assemble_rhs, contract_coefficients, solve_subspace, LoadTerm, OperatorTerm, SubspaceSystem};

/// Final stationarity residual of one field in one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResidual {
    pub field: String,
    pub dim: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Total sweeps over all fixed-point iterations.
    pub sweeps: usize,
    /// Relative factor change of every sweep, in order.
    pub sweep_changes: Vec<f64>,
    pub nonlinear_iterations: usize,
    /// Relative L2 change of the iterate per fixed-point iteration.
    pub nonlinear_changes: Vec<f64>,
    pub residuals: Vec<DimensionResidual>,
    pub wall_seconds: f64,
    pub subspace_converged: bool,
    pub nonlinear_converged: bool,
    pub converged: bool,
}

impl SolveReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Converged (or best-effort) fields and the solve report.
#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub fields: Vec<TdField<T>>,
    pub report: SolveReport,
    pub spaces: SpaceSet<T>,
}

impl<T: Scalar> Solution<T> {
    pub fn field(&self, name: &str) -> Option<&TdField<T>> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Modes actually used for a field: one-dimensional fields need only one.
fn field_modes<T: Scalar>(spec: &ProblemSpec<T>, field: usize) -> usize {
    if spec.fields[field].dims.len() == 1 {
        1
    } else {
        spec.solver.modes
    }
}

/// Seeded random factors for every field.
pub fn init_factors<T: Scalar>(spec: &ProblemSpec<T>, spaces: &SpaceSet<T>, seed: u64) -> Result<Vec<TdField<T>>> {
    let mut rng = seeded_rng(seed);
    spec.fields
        .iter()
        .enumerate()
        .map(|(i, f)| TdField::random(f.name.clone(), spaces, f.dims.clone(), field_modes(spec, i), &mut rng))
        .collect()
}

/// Relative weight of the proximal term added to every subspace system.
const PROXIMAL: f64 = 1e-9;

struct SweepOutcome {
    changes: Vec<f64>,
    converged: bool,
}

/// The engine for one problem: assembled operators and loads, reused across sweeps.
pub struct Solver<T> {
    spec: ProblemSpec<T>,
    spaces: SpaceSet<T>,
    terms: Vec<OperatorTerm<T>>,
    loads: Vec<Vec<LoadTerm<T>>>,
    /// `(dimension, [(field, position)])` in sweep order.
    order: Vec<(String, Vec<(usize, usize)>)>,
}

impl<T: Scalar> Solver<T> {
    pub fn new(spec: &ProblemSpec<T>) -> Result<Self> {
        spec.ensure_valid()?;
        let spaces = SpaceSet::new(&spec.dimensions)?;
        let mut cache: HashMap<String, Arc<BandMatrix<T>>> = HashMap::new();
        let mut terms = Vec::with_capacity(spec.lhs.len());
        for (i, t) in spec.lhs.iter().enumerate() {
            let test = spec.field_index(&t.test_field).expect("validated");
            let trial = spec.field_index(&t.trial_field).expect("validated");
            let mut ops = Vec::new();
            for d in &spec.fields[test].dims {
                let kind = t.operator(d);
                let key = format!("{d}/{kind:?}");
                let op = match cache.get(&key) {
                    Some(op) => op.clone(),
                    None => {
                        let op = Arc::new(spaces.get(d)?.operator(&kind, None)?);
                        cache.insert(key, op.clone());
                        op
                    }
                };
                ops.push(op);
            }
            let label = t.label.clone().unwrap_or_else(|| format!("lhs[{i}]"));
            terms.push(OperatorTerm { coefficient: t.coefficient, test, trial, ops, label });
        }
        let mut loads = Vec::with_capacity(spec.fields.len());
        for f in &spec.fields {
            let mut fl = Vec::new();
            if let Some(g) = spec.rhs.get(&f.name) {
                for term in &g.terms {
                    let per_dim = f.dims.iter().map(|d| spaces.get(d)?.load(&term.factor(d))).collect::<Result<Vec<_>>>()?;
                    fl.push(LoadTerm { coefficient: term.coefficient, loads: per_dim });
                }
            }
            loads.push(fl);
        }
        let mut order = Vec::new();
        for d in spec.sweep_order(&crate::problem::FieldSpec {
            name: String::new(),
            dims: spec.dimensions.iter().map(|d| d.name.clone()).collect(),
        }) {
            let members: Vec<(usize, usize)> = spec
                .fields
                .iter()
                .enumerate()
                .filter_map(|(fi, f)| f.dims.iter().position(|x| *x == d).map(|k| (fi, k)))
                .collect();
            if !members.is_empty() {
                order.push((d, members));
            }
        }
        Ok(Self { spec: spec.clone(), spaces, terms, loads, order })
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn spaces(&self) -> &SpaceSet<T> {
        &self.spaces
    }

    /// The linear LHS terms, one per `lhs` entry.
    pub fn terms(&self) -> &[OperatorTerm<T>] {
        &self.terms
    }

    pub fn init(&self) -> Result<Vec<TdField<T>>> {
        init_factors(&self.spec, &self.spaces, self.spec.solver.seed)
    }

    /// Weighted-mass terms `c ∫ δu u_prev u` built from the previous iterate, one per mode.
    fn nonlinear_terms(&self, prev: &[TdField<T>]) -> Result<Vec<OperatorTerm<T>>> {
        let mut out = Vec::new();
        for nl in &self.spec.nonlinear {
            let NonlinearKind::QuadraticReaction = nl.kind;
            let fi = self.spec.field_index(&nl.field).expect("validated");
            let pf = &prev[fi];
            for p in 0..pf.modes() {
                if pf.factors.iter().any(|u| u.column(p).iter().all(|&v| v == T::zero())) {
                    continue;
                }
                let ops = pf
                    .dims
                    .iter()
                    .enumerate()
                    .map(|(k, d)| {
                        let col = pf.factors[k].column(p).to_vec();
                        let src = move |_: &str, _: usize| Some(col.clone());
                        let kind = OperatorKind::WeightedMass(UnivariateWeight::PreviousSolutionMode { field: nl.field.clone(), mode: p });
                        Ok(Arc::new(self.spaces.get(d)?.operator(&kind, Some(&src))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(OperatorTerm { coefficient: nl.coefficient, test: fi, trial: fi, ops, label: format!("reaction[{p}]") });
            }
        }
        Ok(out)
    }

    fn build_system<'a>(&'a self, terms: &'a [OperatorTerm<T>], fields: &[TdField<T>], fi: usize, k: usize, proximal: bool) -> Result<SubspaceSystem<'a, T>> {
        let dim = self.spec.fields[fi].dims[k].clone();
        let active: Vec<&OperatorTerm<T>> = terms.iter().filter(|t| t.test == fi).collect();
        let coeffs: Vec<Array2<T>> = active.par_iter().map(|t| contract_coefficients(t, fields, k)).collect();
        let mut sum = KronSum::new();
        let mut rhs = assemble_rhs(&self.loads[fi], &fields[fi], k);
        for (t, c) in active.iter().zip(coeffs) {
            let c = c.mapv(|v| v * t.coefficient);
            if t.trial == fi {
                sum.push(c, &t.ops[k]);
            } else {
                // Lagged coupling: subtract K V Cᵀ using the latest trial factors.
                let v = &fields[t.trial].factors[k];
                let kv = apply_band(&t.ops[k], v);
                rhs -= &kv.dot(&c.t());
            }
        }
        let space = self.spaces.get(&dim)?;
        if proximal {
            // δ M (U - U_old): keeps the update well posed when modes become redundant
            // and vanishes at a fixed point.
            let scale = sum
                .terms
                .iter()
                .map(|(c, k)| c.iter().fold(T::zero(), |a, &v| a.max(v.abs())) * k.max_abs())
                .fold(T::zero(), |a, v| a.max(v));
            let delta = T::lit(PROXIMAL).max(T::epsilon() * T::lit(100.0)) * scale / space.mass.max_abs();
            if delta > T::zero() {
                let m = fields[fi].modes();
                let old = &fields[fi].factors[k];
                rhs += &apply_band(&space.mass, old).mapv(|v| v * delta);
                sum.push(Array2::eye(m).mapv(|v: T| v * delta), &space.mass);
            }
        }
        let free = space.index_map().free().to_vec();
        Ok(SubspaceSystem { dim, sum, rhs, free })
    }

    /// One pass over all dimensions. Returns the largest relative L2 change of any field;
    /// factor-wise changes are not used because redundant modes (M above the separation
    /// rank) may keep drifting while the represented function is stationary.
    pub fn sweep(&self, terms: &[OperatorTerm<T>], fields: &mut [TdField<T>], sweep_index: usize) -> Result<f64> {
        let before = fields.to_vec();
        for (_, members) in &self.order {
            for &(fi, k) in members {
                let sys = self.build_system(terms, fields, fi, k, true)?;
                let u = solve_subspace(&sys, self.spec.solver.linear_solver, sweep_index)?;
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(TapsError::LinearSolve { dim: sys.dim.clone(), sweep: sweep_index, reason: "non-finite update".into() });
                }
                fields[fi].factors[k] = u;
            }
        }
        for f in fields.iter_mut() {
            f.normalize_modes();
        }
        self.iterate_change(fields, &before)
    }

    fn sweeps(&self, terms: &[OperatorTerm<T>], fields: &mut [TdField<T>], first_index: usize) -> Result<SweepOutcome> {
        let mut changes = Vec::new();
        for s in 0..self.spec.solver.max_sweeps {
            let d = self.sweep(terms, fields, first_index + s)?;
            changes.push(d);
            if d <= self.spec.solver.tol_subspace {
                return Ok(SweepOutcome { changes, converged: true });
            }
        }
        Ok(SweepOutcome { changes, converged: false })
    }

    /// Stationarity residual of every field in every dimension.
    pub fn residuals(&self, fields: &[TdField<T>], prev: Option<&[TdField<T>]>) -> Result<Vec<DimensionResidual>> {
        let terms = self.active_terms(prev)?;
        let mut out = Vec::new();
        for (fi, f) in fields.iter().enumerate() {
            for k in 0..f.n_dims() {
                let sys = self.build_system(&terms, fields, fi, k, false)?;
                out.push(DimensionResidual { field: f.name.clone(), dim: sys.dim.clone(), residual: sys.residual(&f.factors[k]).as_f64() });
            }
        }
        Ok(out)
    }

    fn active_terms(&self, prev: Option<&[TdField<T>]>) -> Result<Vec<OperatorTerm<T>>> {
        let mut terms = self.terms.clone();
        if let Some(p) = prev {
            terms.extend(self.nonlinear_terms(p)?);
        }
        Ok(terms)
    }

    fn forcing_is_zero(&self) -> bool {
        self.loads
            .iter()
            .flatten()
            .all(|l| l.coefficient == T::zero() || l.loads.iter().any(|v| v.iter().all(|&x| x == T::zero())))
    }

    /// Relative L2 change between two iterates (max over fields).
    pub fn iterate_change(&self, a: &[TdField<T>], b: &[TdField<T>]) -> Result<f64> {
        let mut c = 0.0f64;
        for (x, y) in a.iter().zip(b) {
            let n = l2_norm(x, &self.spaces)?.as_f64();
            let d = l2_distance(x, y, &self.spaces)?.as_f64();
            c = c.max(if n > 0.0 { d / n } else { d });
        }
        Ok(c)
    }

    /// One fixed-point iteration linearized about `prev`, warm-started from it.
    pub fn fixed_point_step(&self, prev: &[TdField<T>]) -> Result<(Vec<TdField<T>>, f64, bool)> {
        let terms = self.active_terms(Some(prev))?;
        let mut fields = prev.to_vec();
        let out = self.sweeps(&terms, &mut fields, 0)?;
        let change = self.iterate_change(&fields, prev)?;
        Ok((fields, change, out.converged))
    }

    /// Run from the seeded initial state.
    pub fn solve(&self) -> Result<Solution<T>> {
        let init = self.init()?;
        self.solve_from(init)
    }

    pub fn solve_from(&self, mut fields: Vec<TdField<T>>) -> Result<Solution<T>> {
        let start = Instant::now();
        let params = &self.spec.solver;
        let mut report = SolveReport::default();
        let nonlinear = self.spec.is_nonlinear();
        let max_outer = if nonlinear { params.max_nonlinear } else { 1 };
        if self.forcing_is_zero() {
            // Homogeneous data: the discrete solution is exactly zero.
            for f in fields.iter_mut() {
                f.factors.iter_mut().for_each(|u| u.fill(T::zero()));
            }
            report.subspace_converged = true;
            report.nonlinear_converged = true;
            report.converged = true;
            report.residuals = self.residuals(&fields, None)?;
            report.wall_seconds = start.elapsed().as_secs_f64();
            return Ok(Solution { fields, report, spaces: self.spaces.clone() });
        }
        let mut prev: Option<Vec<TdField<T>>> = None;
        let mut last_lin: Option<Vec<TdField<T>>> = None;
        let mut sub_ok = false;
        let mut nl_ok = !nonlinear;
        for _ in 0..max_outer {
            let terms = self.active_terms(prev.as_deref())?;
            let out = self.sweeps(&terms, &mut fields, report.sweeps)?;
            report.sweeps += out.changes.len();
            report.sweep_changes.extend(out.changes);
            report.nonlinear_iterations += 1;
            sub_ok = out.converged;
            if !nonlinear {
                break;
            }
            let change = match &prev {
                Some(p) => self.iterate_change(&fields, p)?,
                None => 1.0,
            };
            report.nonlinear_changes.push(change);
            last_lin = prev.replace(fields.clone());
            if change <= params.tol_nonlinear {
                nl_ok = true;
                break;
            }
        }
        // Residuals are measured for the linearization the final state was computed from.
        report.residuals = self.residuals(&fields, last_lin.as_deref())?;
        report.subspace_converged = sub_ok;
        report.nonlinear_converged = nl_ok;
        report.converged = sub_ok && nl_ok;
        report.wall_seconds = start.elapsed().as_secs_f64();
        Ok(Solution { fields, report, spaces: self.spaces.clone() })
    }
}

fn apply_band<T: Scalar>(k: &BandMatrix<T>, v: &Array2<T>) -> Array2<T> {
    let mut out = Array2::zeros((k.n(), v.ncols()));
    for j in 0..v.ncols() {
        let col = k.matvec(&v.column(j).to_vec());
        for (i, x) in col.into_iter().enumerate() {
            out[[i, j]] = x;
        }
    }
    out
}

/// Validate, assemble and solve.
pub fn solve<T: Scalar>(spec: &ProblemSpec<T>) -> Result<Solution<T>> {
    Solver::new(spec)?.solve()
}
