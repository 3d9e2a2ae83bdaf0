use crate::error::{Result, TapsError};
use crate::scalar::Scalar;

pub trait LinearOperator<T> {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn apply(&self, x: &[T], y: &mut [T]);
    /// Diagonal used for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<T>;
}

#[derive(Debug, Clone, Copy)]
pub struct IterativeOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn inverse_diagonal<T: Scalar>(op: &impl LinearOperator<T>) -> Vec<T> {
    op.diagonal()
        .into_iter()
        .map(|d| if d != T::zero() { T::one() / d } else { T::one() })
        .collect()
}

/// Jacobi-preconditioned conjugate gradients (symmetric positive definite systems).
pub fn conjugate_gradient<T: Scalar>(
    op: &impl LinearOperator<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<IterativeOutcome> {
    let n = op.len();
    let dinv = inverse_diagonal(op);
    let bnorm = norm(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(IterativeOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![T::zero(); n];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    let mut z: Vec<T> = r.iter().zip(&dinv).map(|(&a, &d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(IterativeOutcome { iterations: it, relative_residual: res.as_f64() });
        }
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = (norm(&r) / bnorm).as_f64();
    if res <= tol.as_f64() {
        Ok(IterativeOutcome { iterations: max_iter, relative_residual: res })
    } else {
        Err(TapsError::NoConvergence { iterations: max_iter, residual: res })
    }
}

/// Jacobi-preconditioned BiCGSTAB for nonsymmetric systems.
pub fn bicgstab<T: Scalar>(
    op: &impl LinearOperator<T>,
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<IterativeOutcome> {
    let n = op.len();
    let dinv = inverse_diagonal(op);
    let bnorm = norm(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(IterativeOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![T::zero(); n];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, &bi)| *ri = bi - *ri);
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    for it in 0..max_iter {
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(IterativeOutcome { iterations: it, relative_residual: res.as_f64() });
        }
        let rho_new = dot(&r0, &r);
        if rho_new == T::zero() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        op.apply(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r.copy_from_slice(&s);
            continue;
        }
        for i in 0..n {
            z[i] = s[i] * dinv[i];
        }
        op.apply(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == T::zero() {
            break;
        }
    }
    let res = (norm(&r) / bnorm).as_f64();
    if res <= tol.as_f64() {
        Ok(IterativeOutcome { iterations: max_iter, relative_residual: res })
    } else {
        Err(TapsError::NoConvergence { iterations: max_iter, residual: res })
    }
}
