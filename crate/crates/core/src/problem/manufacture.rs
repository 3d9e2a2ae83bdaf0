use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{OperatorKind, UnivariateWeight};
use crate::error::{Result, TapsError};
use crate::function::{Factor, SeparableFunction, SeparableTerm};
use crate::grid::build_mesh;
use crate::scalar::Scalar;

use super::{NonlinearKind, ProblemSpec, WeakFormTerm};

fn neg<T: Scalar>(v: Vec<(T, Factor<T>)>) -> Vec<(T, Factor<T>)> {
    v.into_iter().map(|(c, f)| (-c, f)).collect()
}

fn times<T: Scalar>(v: Vec<(T, Factor<T>)>, g: &Factor<T>) -> Vec<(T, Factor<T>)> {
    v.into_iter().map(|(c, f)| (c, f.mul(g))).collect()
}

fn weight_factor<T: Scalar>(w: &UnivariateWeight<T>) -> Result<Factor<T>> {
    match w {
        UnivariateWeight::Coordinate => Ok(Factor::monomial(1)),
        UnivariateWeight::Indicator { lo, hi } => Ok(Factor::indicator(*lo, *hi)),
        UnivariateWeight::Function(f) => Ok(f.clone()),
        UnivariateWeight::PreviousSolutionMode { .. } => {
            Err(TapsError::Manufacture("iterate-dependent weights have no closed-form strong form".into()))
        }
    }
}

/// Strong form of one 1D operator applied to a factor, as a sum of scaled factors.
fn strong_1d<T: Scalar>(dim: &str, domain: (T, T), kind: &OperatorKind<T>, f: &Factor<T>) -> Result<Vec<(T, Factor<T>)>> {
    Ok(match kind {
        OperatorKind::Mass => vec![(T::one(), f.clone())],
        OperatorKind::Stiffness => neg(f.nth_derivative(2)),
        OperatorKind::MixedNB => f.derivative(),
        OperatorKind::MixedBN => neg(f.derivative()),
        OperatorKind::WeightedMass(w) => vec![(T::one(), f.mul(&weight_factor(w)?))],
        OperatorKind::WeightedStiffness(w) => {
            let g = weight_factor(w)?;
            let jumps: Vec<T> = g.jumps().into_iter().filter(|&b| b > domain.0 && b < domain.1).collect();
            if !jumps.is_empty() {
                let scale = T::one() + f.eval_derivative(1, jumps[0]).abs().max(f.eval(jumps[0]).abs());
                for &b in &jumps {
                    let d = f.eval_derivative(1, b);
                    if d.abs() > T::lit(1e-8) * scale {
                        return Err(TapsError::Manufacture(format!(
                            "flux jumps at the coefficient discontinuity {dim} = {b}: exact derivative there is {d}"
                        )));
                    }
                }
            }
            let mut out = neg(times(f.nth_derivative(2), &g));
            for (c, dg) in g.derivative() {
                out.extend(neg(times(f.derivative(), &dg)).into_iter().map(|(k, h)| (k * c, h)));
            }
            out
        }
    })
}

fn apply_term<T: Scalar>(spec: &ProblemSpec<T>, term: &WeakFormTerm<T>, dims: &[String], exact: &SeparableFunction<T>) -> Result<Vec<SeparableTerm<T>>> {
    let mut out = Vec::new();
    for e in &exact.terms {
        let mut partial = vec![SeparableTerm::new(term.coefficient * e.coefficient)];
        for d in dims {
            let dim = spec.dimension(d).ok_or_else(|| TapsError::Manufacture(format!("unknown dimension `{d}`")))?;
            let pieces = strong_1d(d, (dim.lo, dim.hi), &term.operator(d), &e.factor(d))?;
            partial = partial
                .iter()
                .flat_map(|p| {
                    pieces.iter().map(move |(c, f)| {
                        let mut q = p.clone().with(d.clone(), f.clone());
                        q.coefficient *= *c;
                        q
                    })
                })
                .collect();
        }
        out.extend(partial);
    }
    Ok(out)
}

/// Forcing produced by applying every term's strong-form operator to `exact`,
/// without checking boundary conditions.
pub fn apply_strong_form<T: Scalar>(
    spec: &ProblemSpec<T>,
    exact: &BTreeMap<String, SeparableFunction<T>>,
) -> Result<BTreeMap<String, SeparableFunction<T>>> {
    for (name, g) in exact {
        let f = spec
            .field(name)
            .ok_or_else(|| TapsError::Manufacture(format!("exact solution given for unknown field `{name}`")))?;
        if let Some(d) = g.dims().into_iter().find(|d| !f.dims.contains(d)) {
            return Err(TapsError::Manufacture(format!("exact solution of `{name}` depends on `{d}`, which the field lacks")));
        }
        g.validate()?;
    }
    let zero = SeparableFunction::zero();
    let mut rhs = BTreeMap::new();
    for f in &spec.fields {
        let mut terms = Vec::new();
        for t in spec.lhs.iter().filter(|t| t.test_field == f.name) {
            let g = exact.get(&t.trial_field).unwrap_or(&zero);
            terms.extend(apply_term(spec, t, &f.dims, g)?);
        }
        for nl in spec.nonlinear.iter().filter(|n| n.field == f.name) {
            match nl.kind {
                NonlinearKind::QuadraticReaction => {
                    let g = exact.get(&f.name).unwrap_or(&zero);
                    terms.extend(g.mul(g).scaled(nl.coefficient).terms);
                }
            }
        }
        rhs.insert(f.name.clone(), SeparableFunction::from_terms(terms));
    }
    Ok(rhs)
}

fn check_boundary<T: Scalar>(spec: &ProblemSpec<T>, field: &str, g: &SeparableFunction<T>) -> Result<()> {
    let f = spec.field(field).expect("checked by caller");
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let tol = T::lit(1e-10);
    for dname in &f.dims {
        let dim = spec.dimension(dname).ok_or_else(|| TapsError::Manufacture(format!("unknown dimension `{dname}`")))?;
        let nodes = dim.constrained_nodes()?;
        if nodes.is_empty() {
            continue;
        }
        let mesh = build_mesh(dim)?;
        for i in nodes {
            let x = mesh.nodes()[i];
            let each_zero = g.terms.iter().all(|t| (t.coefficient * t.factor(dname).eval(x)).abs() <= tol);
            if each_zero {
                continue;
            }
            for _ in 0..16 {
                let mut pt = BTreeMap::new();
                let mut scale = T::one();
                for other in &f.dims {
                    let od = spec.dimension(other).expect("validated");
                    let v = if other == dname { x } else { od.lo + (od.hi - od.lo) * T::lit(rng.random_range(0.0..1.0)) };
                    pt.insert(other.clone(), v);
                }
                for t in &g.terms {
                    scale += t.eval(&pt)?.abs();
                }
                let v = g.eval(&pt)?;
                if v.abs() > tol * scale {
                    return Err(TapsError::Manufacture(format!(
                        "exact solution of `{field}` is {v} at constrained node {dname} = {x}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Replace the forcing so that `exact` solves the problem.
pub fn manufacture<T: Scalar>(spec: &ProblemSpec<T>, exact: &BTreeMap<String, SeparableFunction<T>>) -> Result<ProblemSpec<T>> {
    let rhs = apply_strong_form(spec, exact)?;
    for (name, g) in exact {
        check_boundary(spec, name, g)?;
    }
    let mut out = spec.clone();
    out.rhs = rhs;
    Ok(out)
}
