use crate::error::{Result, TapsError};
use crate::scalar::Scalar;

/// Square banded matrix, row-major band storage.
///
/// Entry `(i, j)` with `-kl <= j - i <= ku` lives at `data[i * width + j + kl - i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        Self { n, kl, ku, data: vec![T::zero(); n * (kl + ku + 1)] }
    }

    pub fn from_dense(a: &[Vec<T>]) -> Self {
        let n = a.len();
        let (mut kl, mut ku) = (0, 0);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    if j < i {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    m.set(i, j, v);
                }
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kl(&self) -> usize {
        self.kl
    }

    pub fn ku(&self) -> usize {
        self.ku
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.data[i * self.width() + j + self.kl - i]
        } else {
            T::zero()
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let w = self.width();
        self.data[i * w + j + self.kl - i] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(self.in_band(i, j));
        let w = self.width();
        self.data[i * w + j + self.kl - i] += v;
    }

    /// Column range of the band in row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for i in 0..self.n {
            for j in self.row_range(i) {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row_range(i).map(|j| self.get(i, j) * x[j]).sum();
        }
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        (0..self.n)
            .map(|i| {
                if x[i] == T::zero() {
                    T::zero()
                } else {
                    x[i] * self.row_range(i).map(|j| self.get(i, j) * y[j]).sum::<T>()
                }
            })
            .sum()
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        let scale = self.data.iter().fold(T::zero(), |s, &v| s.max(v.abs()));
        (0..self.n).all(|i| {
            self.row_range(i)
                .all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale)
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |s, &v| s.max(v.abs()))
    }

    /// Keep only rows/columns listed in `keep` (sorted ascending).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let mut out = Self::zeros(keep.len(), self.kl, self.ku);
        for (r, &i) in keep.iter().enumerate() {
            for j in self.row_range(i) {
                let c = pos[j];
                if c != usize::MAX {
                    out.set(r, c, self.get(i, j));
                }
            }
        }
        out
    }

    pub fn lu(&self) -> Result<BandLu<T>> {
        BandLu::factor(self)
    }
}

/// Banded LU with partial pivoting (upper band widened by `kl` for fill-in).
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Scalar> BandLu<T> {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.kl + self.ku + 1) + j + self.kl - i
    }

    pub fn factor(a: &BandMatrix<T>) -> Result<Self> {
        let (n, kl, ku0) = (a.n, a.kl, a.ku);
        let ku = ku0 + kl;
        let w = kl + ku + 1;
        let mut data = vec![T::zero(); n * w];
        for i in 0..n {
            for j in a.row_range(i) {
                data[i * w + j + kl - i] = a.get(i, j);
            }
        }
        let mut lu = Self { n, kl, ku: ku0, data, piv: vec![0; n] };
        let tiny = a.max_abs() * T::epsilon() * T::lit(1e-3);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            let mut p = k;
            let mut best = lu.data[lu.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = lu.data[lu.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return Err(TapsError::SingularMatrix(k));
            }
            lu.piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (lu.idx(k, j), lu.idx(p, j));
                    lu.data.swap(a, b);
                }
            }
            let d = lu.data[lu.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = lu.idx(i, k);
                let l = lu.data[ik] / d;
                lu.data[ik] = l;
                if l != T::zero() {
                    let base_i = lu.idx(i, k);
                    let base_k = lu.idx(k, k);
                    for off in 1..=(last_col - k) {
                        let ukj = lu.data[base_k + off];
                        lu.data[base_i + off] -= l * ukj;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let ku = self.ku + self.kl;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != T::zero() {
                for i in k + 1..=(k + self.kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            let base = self.idx(i, i);
            for off in 1..=((i + ku).min(n - 1) - i) {
                s -= self.data[base + off] * b[i + off];
            }
            b[i] = s / self.data[base];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
