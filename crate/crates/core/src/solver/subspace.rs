//! One subspace update: coefficient contraction, right-hand side and Kronecker-sum solve.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::error::{Result, TapsError};
use crate::linalg::{bicgstab, conjugate_gradient, BandMatrix, KronSum, LinearOperator};
use crate::problem::{LinearSolver, DIRECT_SIZE_LIMIT};
use crate::scalar::Scalar;
use crate::td::{gram, TdField};

/// An assembled LHS term: per-dimension operators aligned with the test field's dimensions.
#[derive(Debug, Clone)]
pub struct OperatorTerm<T> {
    pub coefficient: T,
    pub test: usize,
    pub trial: usize,
    pub ops: Vec<Arc<BandMatrix<T>>>,
    pub label: String,
}

/// A separable forcing term with its per-dimension load vectors `∫Ñ f_d`.
#[derive(Debug, Clone)]
pub struct LoadTerm<T> {
    pub coefficient: T,
    pub loads: Vec<Vec<T>>,
}

/// `C = ⊙_{k != target} Uᵀ K_k V` for a term; all ones when the field has one dimension.
pub fn contract_coefficients<T: Scalar>(term: &OperatorTerm<T>, fields: &[TdField<T>], target: usize) -> Array2<T> {
    let u = &fields[term.test];
    let v = &fields[term.trial];
    let mut c = Array2::from_elem((u.modes(), v.modes()), T::one());
    for k in 0..u.n_dims() {
        if k != target {
            let g = gram(&u.factors[k], &term.ops[k], &v.factors[k]);
            c.zip_mut_with(&g, |a, &b| *a *= b);
        }
    }
    c
}

/// Column `m`: `Σ_r c_r L_r^[target] Π_{k != target} (U_k[:, m] · L_r^[k])`.
pub fn assemble_rhs<T: Scalar>(loads: &[LoadTerm<T>], field: &TdField<T>, target: usize) -> Array2<T> {
    let n = field.factors[target].nrows();
    let m = field.modes();
    let mut q = Array2::zeros((n, m));
    for r in loads {
        let mut scale = Array1::from_elem(m, r.coefficient);
        for (k, load) in r.loads.iter().enumerate() {
            if k == target {
                continue;
            }
            let l = Array1::from(load.clone());
            let proj = field.factors[k].t().dot(&l);
            scale *= &proj;
        }
        let lt = &r.loads[target];
        for i in 0..n {
            for j in 0..m {
                q[[i, j]] += lt[i] * scale[j];
            }
        }
    }
    q
}

/// `Σ_t (C_t ⊗ K_t) vec(U) = vec(Q)` for one dimension of one field.
pub struct SubspaceSystem<'a, T> {
    pub dim: String,
    pub sum: KronSum<'a, T>,
    pub rhs: Array2<T>,
    pub free: Vec<usize>,
}

struct ReducedOperator<'s, 'a, T> {
    sys: &'s SubspaceSystem<'a, T>,
    n: usize,
    m: usize,
}

impl<T: Scalar> ReducedOperator<'_, '_, T> {
    fn expand(&self, x: &[T]) -> Array2<T> {
        let mut u = Array2::zeros((self.n, self.m));
        for (r, &i) in self.sys.free.iter().enumerate() {
            for j in 0..self.m {
                u[[i, j]] = x[r * self.m + j];
            }
        }
        u
    }

    fn gather(&self, u: &Array2<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.sys.free.len() * self.m);
        for &i in &self.sys.free {
            for j in 0..self.m {
                out.push(u[[i, j]]);
            }
        }
        out
    }
}

impl<T: Scalar> LinearOperator<T> for ReducedOperator<'_, '_, T> {
    fn len(&self) -> usize {
        self.sys.free.len() * self.m
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let out = self.sys.sum.apply(&self.expand(x));
        y.copy_from_slice(&self.gather(&out));
    }

    fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.len()];
        for (c, k) in &self.sys.sum.terms {
            for (r, &i) in self.sys.free.iter().enumerate() {
                let kii = k.get(i, i);
                for j in 0..self.m {
                    d[r * self.m + j] += c[[j, j]] * kii;
                }
            }
        }
        d
    }
}

fn frob<T: Scalar>(a: &Array2<T>) -> T {
    a.iter().map(|&v| v * v).sum::<T>().sqrt()
}

impl<T: Scalar> SubspaceSystem<'_, T> {
    /// `‖Σ K_t U C_tᵀ - Q‖ / ‖Q‖` on the free rows.
    pub fn residual(&self, u: &Array2<T>) -> T {
        let mut r = self.sum.apply(u) - &self.rhs;
        let mut q = self.rhs.clone();
        let n = u.nrows();
        for i in 0..n {
            if !self.free.contains(&i) {
                r.row_mut(i).fill(T::zero());
                q.row_mut(i).fill(T::zero());
            }
        }
        let qn = frob(&q);
        if qn == T::zero() {
            frob(&r)
        } else {
            frob(&r) / qn
        }
    }

    fn symmetric(&self) -> bool {
        let tol = T::lit(1e-12);
        self.sum.terms.iter().all(|(c, k)| {
            let cs = c.iter().zip(c.t().iter()).all(|(&a, &b)| (a - b).abs() <= tol * (T::one() + a.abs()));
            cs && k.is_symmetric(tol)
        })
    }
}

/// Solve the subspace system; constrained rows of the result are zero.
pub fn solve_subspace<T: Scalar>(sys: &SubspaceSystem<'_, T>, solver: LinearSolver, sweep: usize) -> Result<Array2<T>> {
    let (n, m) = sys.rhs.dim();
    if sys.rhs.iter().all(|&v| v == T::zero()) {
        return Ok(Array2::zeros((n, m)));
    }
    let size = sys.free.len() * m;
    let fail = |reason: String| TapsError::LinearSolve { dim: sys.dim.clone(), sweep, reason };
    let iterative = match solver {
        LinearSolver::DirectSparse if size <= DIRECT_SIZE_LIMIT => None,
        LinearSolver::DirectSparse => Some((1e-10, 10 * size)),
        LinearSolver::ConjugateGradient { tol, max_iter } => Some((tol, max_iter)),
    };
    match iterative {
        None => sys.sum.solve_direct(&sys.rhs, &sys.free).map_err(|e| fail(e.to_string())),
        Some((tol, max_iter)) => {
            let op = ReducedOperator { sys, n, m };
            let b = op.gather(&sys.rhs);
            let mut x = vec![T::zero(); b.len()];
            let tol = T::lit(tol);
            let outcome = if sys.symmetric() {
                conjugate_gradient(&op, &b, &mut x, tol, max_iter)
            } else {
                bicgstab(&op, &b, &mut x, tol, max_iter)
            };
            outcome.map_err(|e| fail(e.to_string()))?;
            Ok(op.expand(&x))
        }
    }
}
