use ndarray::{Array2, ShapeBuilder};

use crate::error::{Result, TapsError};
use crate::linalg::{BandLu, BandMatrix};
use crate::scalar::Scalar;

/// Column-major stacking: node index varies fastest.
pub fn vec<T: Scalar>(u: &Array2<T>) -> Vec<T> {
    let (n, m) = u.dim();
    let mut out = Vec::with_capacity(n * m);
    for j in 0..m {
        out.extend(u.column(j).iter().copied());
    }
    out
}

pub fn unvec<T: Scalar>(v: &[T], n: usize, m: usize) -> Result<Array2<T>> {
    if v.len() != n * m {
        return Err(TapsError::Shape(format!("vector of length {} cannot be unstacked to {n}x{m}", v.len())));
    }
    Array2::from_shape_vec((n, m).f(), v.to_vec()).map_err(|e| TapsError::Shape(e.to_string()))
}

/// Explicit Kronecker product `C ⊗ K` as a dense matrix.
pub fn kron_dense<T: Scalar>(c: &Array2<T>, k: &Array2<T>) -> Array2<T> {
    let (cr, cc) = c.dim();
    let (kr, kc) = k.dim();
    Array2::from_shape_fn((cr * kr, cc * kc), |(i, j)| c[[i / kr, j / kc]] * k[[i % kr, j % kc]])
}

/// `(C ⊗ K) vec(U) = vec(K U Cᵀ)` without forming the Kronecker product.
pub fn kron_matvec<T: Scalar>(c: &Array2<T>, k: &BandMatrix<T>, u: &Array2<T>) -> Array2<T> {
    let (n, m) = u.dim();
    let mut ku = Array2::<T>::zeros((n, m));
    let mut col = vec![T::zero(); n];
    for j in 0..m {
        let uj: Vec<T> = u.column(j).to_vec();
        k.matvec_into(&uj, &mut col);
        ku.column_mut(j).iter_mut().zip(&col).for_each(|(a, &b)| *a = b);
    }
    ku.dot(&c.t())
}

/// Apply `A_0 ⊗ ... ⊗ A_{D-1}` to a full tensor stored with axis 0 fastest.
/// `A_d` acts on axis `d`; the Kronecker order is therefore `A_{D-1} ⊗ ... ⊗ A_0`
/// in the usual matrix convention.
pub fn kron_apply_full<T: Scalar>(ops: &[&BandMatrix<T>], x: &[T]) -> Vec<T> {
    let shape: Vec<usize> = ops.iter().map(|a| a.n()).collect();
    debug_assert_eq!(shape.iter().product::<usize>(), x.len());
    let mut cur = x.to_vec();
    let mut next = vec![T::zero(); x.len()];
    let mut stride = 1;
    for (d, a) in ops.iter().enumerate() {
        let n = shape[d];
        let outer = x.len() / (stride * n);
        for o in 0..outer {
            for s in 0..stride {
                let base = o * stride * n + s;
                for i in 0..n {
                    let mut acc = T::zero();
                    for j in a.row_range(i) {
                        acc += a.get(i, j) * cur[base + j * stride];
                    }
                    next[base + i * stride] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        stride *= n;
    }
    cur
}

/// `Σ_t C_t ⊗ K_t` restricted to a set of free rows of the `K_t`.
pub struct KronSum<'a, T> {
    pub terms: Vec<(Array2<T>, &'a BandMatrix<T>)>,
}

impl<'a, T: Scalar> KronSum<'a, T> {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn push(&mut self, c: Array2<T>, k: &'a BandMatrix<T>) {
        self.terms.push((c, k));
    }

    pub fn modes(&self) -> usize {
        self.terms.first().map(|(c, _)| c.nrows()).unwrap_or(0)
    }

    /// `Σ_t K_t U C_tᵀ` on full-length factor matrices.
    pub fn apply(&self, u: &Array2<T>) -> Array2<T> {
        let mut out = Array2::<T>::zeros(u.dim());
        for (c, k) in &self.terms {
            out += &kron_matvec(c, k, u);
        }
        out
    }

    /// Assemble on the `free` nodes with mode-fastest ordering `(i, m) -> i * M + m`.
    /// This makes the system block-banded with half-bandwidth `(kl + 1) * M - 1`.
    pub fn assemble_banded(&self, free: &[usize]) -> BandMatrix<T> {
        let m = self.modes();
        let mut pos = vec![usize::MAX; self.terms.first().map(|(_, k)| k.n()).unwrap_or(0)];
        for (r, &i) in free.iter().enumerate() {
            pos[i] = r;
        }
        let kl = self.terms.iter().map(|(_, k)| k.kl()).max().unwrap_or(0);
        let ku = self.terms.iter().map(|(_, k)| k.ku()).max().unwrap_or(0);
        let nf = free.len();
        let mut a = BandMatrix::zeros(nf * m, (kl + 1) * m - 1, (ku + 1) * m - 1);
        for (c, k) in &self.terms {
            for (r, &i) in free.iter().enumerate() {
                for j in k.row_range(i) {
                    let col = pos[j];
                    if col == usize::MAX {
                        continue;
                    }
                    let kij = k.get(i, j);
                    if kij == T::zero() {
                        continue;
                    }
                    for mi in 0..m {
                        for ni in 0..m {
                            let cv = c[[mi, ni]];
                            if cv != T::zero() {
                                a.add(r * m + mi, col * m + ni, cv * kij);
                            }
                        }
                    }
                }
            }
        }
        a
    }

    /// Solve `Σ_t (C_t ⊗ K_t) vec(U) = vec(Q)` on the free nodes; constrained rows of the result are zero.
    pub fn solve_direct(&self, q: &Array2<T>, free: &[usize]) -> Result<Array2<T>> {
        let m = self.modes();
        let a = self.assemble_banded(free);
        let lu: BandLu<T> = a.lu()?;
        let mut rhs = vec![T::zero(); free.len() * m];
        for (r, &i) in free.iter().enumerate() {
            for mi in 0..m {
                rhs[r * m + mi] = q[[i, mi]];
            }
        }
        lu.solve_in_place(&mut rhs);
        let mut u = Array2::<T>::zeros(q.dim());
        for (r, &i) in free.iter().enumerate() {
            for mi in 0..m {
                u[[i, mi]] = rhs[r * m + mi];
            }
        }
        Ok(u)
    }
}

impl<'a, T: Scalar> Default for KronSum<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn vec_convention() {
        let u = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(vec(&u), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&[1.0, 3.0, 2.0, 4.0], 2, 2).unwrap(), u);
        assert!(unvec(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn kron_apply_full_matches_dense() {
        let a = BandMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = BandMatrix::from_dense(&[vec![0.5, 0.0, 1.0], vec![0.0, 2.0, 0.0], vec![1.0, 0.0, -1.0]]);
        let x: Vec<f64> = (0..6).map(|i| i as f64 + 1.0).collect();
        // axis 0 has length 2 (a), axis 1 length 3 (b): matrix is b ⊗ a
        let y = kron_apply_full(&[&a, &b], &x);
        let ad = Array2::from_shape_fn((2, 2), |(i, j)| a.get(i, j));
        let bd = Array2::from_shape_fn((3, 3), |(i, j)| b.get(i, j));
        let k = kron_dense(&bd, &ad);
        let want = k.dot(&ndarray::Array1::from(x));
        for i in 0..6 {
            assert!((y[i] - want[i]).abs() < 1e-14);
        }
    }
}
