//! Declarative problem definitions: dimensions, fields, weak-form terms and forcing.

mod manufacture;
mod presets;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assembly::{OperatorKind, UnivariateWeight};
use crate::error::{Result, TapsError};
use crate::function::{Factor, SeparableFunction};
use crate::grid::{BasisConfig, DimensionSpec, Role};
use crate::scalar::Scalar;

pub use manufacture::{apply_strong_form, manufacture};
pub use presets::{preset, PresetName, PRESET_NAMES};

/// A field and the dimensions it depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub dims: Vec<String>,
}

/// `coefficient * ∫ Π_d (test op_d trial)`; dimensions without an entry use `Mass`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WeakFormTerm<T> {
    pub coefficient: T,
    pub test_field: String,
    pub trial_field: String,
    #[serde(default)]
    pub operators: BTreeMap<String, OperatorKind<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl<T: Scalar> WeakFormTerm<T> {
    pub fn new(coefficient: T, field: &str) -> Self {
        Self::coupling(coefficient, field, field)
    }

    pub fn coupling(coefficient: T, test: &str, trial: &str) -> Self {
        Self {
            coefficient,
            test_field: test.to_string(),
            trial_field: trial.to_string(),
            operators: BTreeMap::new(),
            label: None,
        }
    }

    pub fn with(mut self, dim: &str, kind: OperatorKind<T>) -> Self {
        self.operators.insert(dim.to_string(), kind);
        self
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn operator(&self, dim: &str) -> OperatorKind<T> {
        self.operators.get(dim).cloned().unwrap_or(OperatorKind::Mass)
    }

    pub fn is_diagonal(&self) -> bool {
        self.test_field == self.trial_field
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearKind {
    /// `coefficient * u²` in the strong form, linearized as `u_prev * u`.
    QuadraticReaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct NonlinearTerm<T> {
    pub kind: NonlinearKind,
    pub field: String,
    pub coefficient: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearSolver {
    /// Banded LU of the assembled Kronecker-sum system.
    DirectSparse,
    /// Jacobi-preconditioned CG (BiCGSTAB when the system is nonsymmetric).
    ConjugateGradient { tol: f64, max_iter: usize },
}

/// Systems larger than this switch from the direct to the iterative solver.
pub const DIRECT_SIZE_LIMIT: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    /// Number of modes `M`.
    #[serde(rename = "M")]
    pub modes: usize,
    pub tol_subspace: f64,
    pub max_sweeps: usize,
    pub tol_nonlinear: f64,
    pub max_nonlinear: usize,
    pub linear_solver: LinearSolver,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            modes: 8,
            tol_subspace: 1e-6,
            max_sweeps: 200,
            tol_nonlinear: 1e-6,
            max_nonlinear: 50,
            linear_solver: LinearSolver::DirectSparse,
            seed: 0,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.modes == 0 {
            out.push(Diagnostic::new("solver.M", "mode count must be at least 1"));
        }
        for (k, v) in [("solver.tol_subspace", self.tol_subspace), ("solver.tol_nonlinear", self.tol_nonlinear)] {
            if !(v > 0.0) || !v.is_finite() {
                out.push(Diagnostic::new(k, format!("tolerance must be positive, got {v}")));
            }
        }
        if self.max_sweeps == 0 {
            out.push(Diagnostic::new("solver.max_sweeps", "must be at least 1"));
        }
        if self.max_nonlinear == 0 {
            out.push(Diagnostic::new("solver.max_nonlinear", "must be at least 1"));
        }
        if let LinearSolver::ConjugateGradient { tol, max_iter } = self.linear_solver {
            if !(tol > 0.0) || max_iter == 0 {
                out.push(Diagnostic::new("solver.linear_solver", "iterative solver needs tol > 0 and max_iter >= 1"));
            }
        }
        out
    }
}

/// A validation finding, keyed by the offending item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { location: location.into(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ProblemSpec<T> {
    #[serde(default)]
    pub name: String,
    pub dimensions: Vec<DimensionSpec<T>>,
    pub fields: Vec<FieldSpec>,
    pub lhs: Vec<WeakFormTerm<T>>,
    #[serde(default)]
    pub rhs: BTreeMap<String, SeparableFunction<T>>,
    #[serde(default)]
    pub nonlinear: Vec<NonlinearTerm<T>>,
    #[serde(default)]
    pub solver: SolverParams,
}

impl<T: Scalar> ProblemSpec<T> {
    pub fn dimension(&self, name: &str) -> Option<&DimensionSpec<T>> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn is_nonlinear(&self) -> bool {
        !self.nonlinear.is_empty()
    }

    /// Sweep order: spatial, then parametric, then temporal, each in declaration order.
    pub fn sweep_order(&self, field: &FieldSpec) -> Vec<String> {
        let mut out = Vec::with_capacity(field.dims.len());
        for role in [Role::Spatial, Role::Parametric, Role::Temporal] {
            for d in &self.dimensions {
                if d.role == role && field.dims.contains(&d.name) {
                    out.push(d.name.clone());
                }
            }
        }
        out
    }

    /// Same problem with every dimension refined to `n` elements.
    pub fn refined(&self, n: usize) -> Self {
        let mut s = self.clone();
        s.dimensions.iter_mut().for_each(|d| d.n_elements = n);
        s
    }

    /// Same problem with the basis of every dimension replaced.
    pub fn with_basis(&self, basis: BasisConfig<T>) -> Self {
        let mut s = self.clone();
        s.dimensions.iter_mut().for_each(|d| d.basis = basis);
        s
    }

    pub fn with_modes(mut self, m: usize) -> Self {
        self.solver.modes = m;
        self
    }

    /// Equivalent full-order unknown count: `Π_d n_d` summed over fields.
    pub fn dof_equiv(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| {
                f.dims
                    .iter()
                    .filter_map(|d| self.dimension(d))
                    .map(|d| d.n_nodes() as f64)
                    .product::<f64>()
            })
            .sum()
    }

    /// Check the structural invariants; empty when the spec is usable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = self.solver.validate();
        let mut seen = BTreeSet::new();
        for (i, d) in self.dimensions.iter().enumerate() {
            let loc = format!("dimensions[{i}] `{}`", d.name);
            if !seen.insert(d.name.clone()) {
                out.push(Diagnostic::new(&loc, "duplicate dimension name"));
            }
            if !(d.lo < d.hi) || !d.lo.is_finite() || !d.hi.is_finite() {
                out.push(Diagnostic::new(&loc, format!("invalid interval [{}, {}]", d.lo, d.hi)));
            }
            if d.n_elements == 0 {
                out.push(Diagnostic::new(&loc, "needs at least one element"));
            }
            if let Err(e) = d.basis.validate() {
                out.push(Diagnostic::new(&loc, e.to_string()));
            } else if d.n_nodes() < d.basis.p + 1 {
                out.push(Diagnostic::new(&loc, format!("order p = {} needs at least {} nodes", d.basis.p, d.basis.p + 1)));
            }
            match d.constrained_nodes() {
                Ok(c) if c.len() >= d.n_nodes() && d.n_elements > 0 => {
                    out.push(Diagnostic::new(&loc, "every node is constrained"))
                }
                Err(e) => out.push(Diagnostic::new(&loc, e.to_string())),
                _ => {}
            }
        }
        if self.fields.is_empty() {
            out.push(Diagnostic::new("fields", "at least one field is required"));
        }
        let mut fseen = BTreeSet::new();
        for f in &self.fields {
            let loc = format!("field `{}`", f.name);
            if !fseen.insert(f.name.clone()) {
                out.push(Diagnostic::new(&loc, "duplicate field name"));
            }
            if f.dims.is_empty() {
                out.push(Diagnostic::new(&loc, "field has no dimensions"));
            }
            for d in &f.dims {
                if self.dimension(d).is_none() {
                    out.push(Diagnostic::new(&loc, format!("unknown dimension `{d}`")));
                }
            }
            let uniq: BTreeSet<_> = f.dims.iter().collect();
            if uniq.len() != f.dims.len() {
                out.push(Diagnostic::new(&loc, "dimension listed twice"));
            }
        }
        for (i, t) in self.lhs.iter().enumerate() {
            let loc = format!("lhs[{i}]{}", t.label.as_deref().map(|l| format!(" ({l})")).unwrap_or_default());
            if !t.coefficient.is_finite() {
                out.push(Diagnostic::new(&loc, "non-finite coefficient"));
            }
            let test = self.field(&t.test_field);
            let trial = self.field(&t.trial_field);
            for (role, name, f) in [("test", &t.test_field, test), ("trial", &t.trial_field, trial)] {
                if f.is_none() {
                    out.push(Diagnostic::new(&loc, format!("unknown {role} field `{name}`")));
                }
            }
            if let (Some(a), Some(b)) = (test, trial) {
                if a.dims != b.dims {
                    out.push(Diagnostic::new(&loc, "coupled fields must share the same dimension list"));
                }
            }
            for (d, kind) in &t.operators {
                match (self.dimension(d), test) {
                    (None, _) => out.push(Diagnostic::new(&loc, format!("unknown dimension `{d}`"))),
                    (Some(_), Some(f)) if !f.dims.contains(d) => {
                        out.push(Diagnostic::new(&loc, format!("field `{}` does not depend on `{d}`", f.name)))
                    }
                    (Some(dim), _) => self.check_weight(&loc, dim, kind, &mut out),
                }
            }
        }
        for f in &self.fields {
            self.check_coercive(f, &mut out);
        }
        for (name, g) in &self.rhs {
            let loc = format!("rhs `{name}`");
            match self.field(name) {
                None => out.push(Diagnostic::new(&loc, "unknown field")),
                Some(f) => {
                    for d in g.dims() {
                        if !f.dims.contains(&d) {
                            out.push(Diagnostic::new(&loc, format!("forcing depends on `{d}`, which the field lacks")));
                        }
                    }
                }
            }
            if let Err(e) = g.validate() {
                out.push(Diagnostic::new(&loc, e.to_string()));
            }
        }
        for (i, nl) in self.nonlinear.iter().enumerate() {
            let loc = format!("nonlinear[{i}]");
            if self.field(&nl.field).is_none() {
                out.push(Diagnostic::new(&loc, format!("unknown field `{}`", nl.field)));
            }
            if !nl.coefficient.is_finite() {
                out.push(Diagnostic::new(&loc, "non-finite coefficient"));
            }
        }
        out
    }

    fn check_weight(&self, loc: &str, dim: &DimensionSpec<T>, kind: &OperatorKind<T>, out: &mut Vec<Diagnostic>) {
        let w = match kind {
            OperatorKind::WeightedMass(w) | OperatorKind::WeightedStiffness(w) => w,
            _ => return,
        };
        match w {
            UnivariateWeight::Indicator { lo, hi } => {
                if !(lo < hi) {
                    out.push(Diagnostic::new(loc, format!("empty indicator [{lo}, {hi}] on `{}`", dim.name)));
                    return;
                }
                let h = (dim.hi - dim.lo) / T::from_usize_lossy(dim.n_elements.max(1));
                for b in [*lo, *hi] {
                    if b <= dim.lo || b >= dim.hi {
                        continue;
                    }
                    let k = ((b - dim.lo) / h).round();
                    if (dim.lo + k * h - b).abs() > h * T::lit(1e-9) {
                        out.push(Diagnostic::new(
                            loc,
                            format!("indicator bound {b} on `{}` does not fall on an element boundary", dim.name),
                        ));
                    }
                }
            }
            UnivariateWeight::PreviousSolutionMode { .. } => {
                out.push(Diagnostic::new(loc, "iterate-dependent weights are generated from nonlinear terms, not written in lhs"));
            }
            UnivariateWeight::Function(f) => {
                if let Err(e) = f.validate() {
                    out.push(Diagnostic::new(loc, e.to_string()));
                }
            }
            UnivariateWeight::Coordinate => {}
        }
    }

    /// Every dimension of a field must carry a symmetric operator in at least one diagonal term.
    fn check_coercive(&self, f: &FieldSpec, out: &mut Vec<Diagnostic>) {
        let diag: Vec<_> = self.lhs.iter().filter(|t| t.test_field == f.name && t.is_diagonal()).collect();
        if diag.is_empty() {
            out.push(Diagnostic::new(format!("field `{}`", f.name), "no diagonal (coercive) term"));
            return;
        }
        for d in &f.dims {
            if !diag.iter().any(|t| t.operator(d).is_symmetric()) {
                out.push(Diagnostic::new(
                    format!("field `{}`", f.name),
                    format!("no diagonal term has a mass or stiffness operator in `{d}`"),
                ));
            }
        }
    }

    /// Fail with all diagnostics joined when the spec is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            Err(TapsError::InvalidProblem(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")))
        }
    }

    /// Pin some dimensions to fixed values, folding their operators into the term coefficients.
    ///
    /// Only mass-type operators (plain or weighted) can be pinned.
    pub fn fix_dimensions(&self, values: &BTreeMap<String, T>) -> Result<Self> {
        for (d, &x) in values {
            let dim = self
                .dimension(d)
                .ok_or_else(|| TapsError::DimensionMismatch(format!("unknown dimension `{d}`")))?;
            if !dim.contains(x) {
                return Err(TapsError::OutOfDomain { dim: d.clone(), value: x.as_f64(), lo: dim.lo.as_f64(), hi: dim.hi.as_f64() });
            }
        }
        let mut out = self.clone();
        out.dimensions.retain(|d| !values.contains_key(&d.name));
        for f in &mut out.fields {
            f.dims.retain(|d| !values.contains_key(d));
            if f.dims.is_empty() {
                return Err(TapsError::DimensionMismatch(format!("field `{}` would have no dimensions left", f.name)));
            }
        }
        if !self.nonlinear.is_empty() {
            return Err(TapsError::InvalidProblem("cannot pin dimensions of a nonlinear problem".into()));
        }
        let mut lhs = Vec::with_capacity(self.lhs.len());
        for t in &self.lhs {
            let mut nt = t.clone();
            for (d, &x) in values {
                let s = match nt.operators.remove(d).unwrap_or(OperatorKind::Mass) {
                    OperatorKind::Mass => T::one(),
                    OperatorKind::WeightedMass(UnivariateWeight::Coordinate) => x,
                    OperatorKind::WeightedMass(UnivariateWeight::Indicator { lo, hi }) => {
                        if x >= lo && x <= hi {
                            T::one()
                        } else {
                            T::zero()
                        }
                    }
                    OperatorKind::WeightedMass(UnivariateWeight::Function(f)) => f.eval(x),
                    other => {
                        return Err(TapsError::InvalidProblem(format!("cannot pin `{d}`: operator {other:?} is not mass-type")))
                    }
                };
                nt.coefficient *= s;
            }
            if nt.coefficient != T::zero() {
                lhs.push(nt);
            }
        }
        out.lhs = lhs;
        out.rhs = self.rhs.iter().map(|(k, g)| (k.clone(), g.fix_dimensions(values))).collect();
        Ok(out)
    }
}

/// Forcing `coefficient * Π factors` as a one-term separable function.
pub fn forcing<T: Scalar>(coefficient: T, factors: &[(&str, Factor<T>)]) -> SeparableFunction<T> {
    let mut t = crate::function::SeparableTerm::new(coefficient);
    for (d, f) in factors {
        t = t.with(*d, f.clone());
    }
    SeparableFunction::single(t)
}
