//! Separated representation `u = Σ_m Π_d Ñ^[d](x_d) U^[d][:, m]`.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::SpaceSet;
use crate::error::{Result, TapsError};
use crate::function::SeparableFunction;
use crate::grid::Basis1D;
use crate::linalg::BandMatrix;
use crate::scalar::Scalar;

/// One field in separated form: a factor matrix (`n_d x M`) per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TdField<T> {
    pub name: String,
    pub dims: Vec<String>,
    pub factors: Vec<Array2<T>>,
}

impl<T: Scalar> TdField<T> {
    pub fn new(name: impl Into<String>, dims: Vec<String>, factors: Vec<Array2<T>>) -> Result<Self> {
        if dims.is_empty() || dims.len() != factors.len() {
            return Err(TapsError::Shape(format!(
                "{} dimensions but {} factor matrices",
                dims.len(),
                factors.len()
            )));
        }
        let m = factors[0].ncols();
        if m == 0 || factors.iter().any(|f| f.ncols() != m) {
            return Err(TapsError::Shape("factor matrices must share a positive mode count".into()));
        }
        Ok(Self { name: name.into(), dims, factors })
    }

    pub fn zeros(name: impl Into<String>, dims: Vec<String>, n: &[usize], modes: usize) -> Result<Self> {
        let factors = n.iter().map(|&k| Array2::zeros((k, modes))).collect();
        Self::new(name, dims, factors)
    }

    /// Uniform `[-1, 1]` entries with zero rows on constrained nodes, then normalized.
    pub fn random(name: impl Into<String>, spaces: &SpaceSet<T>, dims: Vec<String>, modes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut factors = Vec::with_capacity(dims.len());
        for d in &dims {
            let s = spaces.get(d)?;
            let mut u = Array2::from_shape_fn((s.n_nodes(), modes), |_| T::lit(rng.random_range(-1.0..=1.0)));
            for &i in &s.constrained {
                u.row_mut(i).fill(T::zero());
            }
            factors.push(u);
        }
        let mut f = Self::new(name, dims, factors)?;
        f.normalize_modes();
        Ok(f)
    }

    pub fn modes(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn n_dims(&self) -> usize {
        self.dims.len()
    }

    pub fn position(&self, dim: &str) -> Option<usize> {
        self.dims.iter().position(|d| d == dim)
    }

    pub fn factor(&self, dim: &str) -> Option<&Array2<T>> {
        self.position(dim).map(|i| &self.factors[i])
    }

    /// Evaluate at a point given in the field's dimension order.
    pub fn evaluate(&self, bases: &[&Basis1D<T>], point: &[T]) -> Result<T> {
        if bases.len() != self.dims.len() || point.len() != self.dims.len() {
            return Err(TapsError::DimensionMismatch(format!(
                "field `{}` has {} dimensions, got {} bases and {} coordinates",
                self.name,
                self.dims.len(),
                bases.len(),
                point.len()
            )));
        }
        let mut acc = vec![T::one(); self.modes()];
        for (d, (&x, basis)) in point.iter().zip(bases).enumerate() {
            let mesh = basis.mesh();
            let tol = (mesh.hi() - mesh.lo()) * T::lit(1e-12);
            if !(x >= mesh.lo() - tol && x <= mesh.hi() + tol) {
                return Err(TapsError::OutOfDomain {
                    dim: self.dims[d].clone(),
                    value: x.as_f64(),
                    lo: mesh.lo().as_f64(),
                    hi: mesh.hi().as_f64(),
                });
            }
            let row = basis.eval(x.max(mesh.lo()).min(mesh.hi()));
            let u = &self.factors[d];
            for (m, a) in acc.iter_mut().enumerate() {
                let mut v = T::zero();
                for (k, &nk) in row.n.iter().enumerate() {
                    v += nk * u[[row.start + k, m]];
                }
                *a *= v;
            }
        }
        Ok(acc.into_iter().sum())
    }

    /// Evaluate at a named point using the problem's spaces.
    pub fn evaluate_at(&self, spaces: &SpaceSet<T>, point: &BTreeMap<String, T>) -> Result<T> {
        let bases = self.dims.iter().map(|d| spaces.get(d).map(|s| &s.basis)).collect::<Result<Vec<_>>>()?;
        let xs = self
            .dims
            .iter()
            .map(|d| point.get(d).copied().ok_or_else(|| TapsError::DimensionMismatch(format!("no coordinate for `{d}`"))))
            .collect::<Result<Vec<_>>>()?;
        self.evaluate(&bases, &xs)
    }

    /// Equalize column norms within each mode; dimensions after the first
    /// get a positive largest-magnitude entry and the sign goes to the first.
    pub fn normalize_modes(&mut self) {
        let d = self.factors.len();
        for m in 0..self.modes() {
            let norms: Vec<T> = self.factors.iter().map(|u| column_norm(u, m)).collect();
            if norms.iter().any(|&n| n == T::zero()) {
                self.factors.iter_mut().for_each(|u| u.column_mut(m).fill(T::zero()));
                continue;
            }
            let log_mean = norms.iter().map(|n| n.ln()).sum::<T>() / T::from_usize_lossy(d);
            let target = log_mean.exp();
            let mut sign = T::one();
            for (k, u) in self.factors.iter_mut().enumerate() {
                let mut col = u.column_mut(m);
                let mut s = target / norms[k];
                if k > 0 {
                    let big = col.iter().fold(T::zero(), |b, &v| if v.abs() > b.abs() { v } else { b });
                    if big < T::zero() {
                        s = -s;
                        sign = -sign;
                    }
                }
                col.mapv_inplace(|v| v * s);
            }
            if sign < T::zero() {
                self.factors[0].column_mut(m).mapv_inplace(|v| -v);
            }
        }
    }

    pub fn normalized(&self) -> Self {
        let mut f = self.clone();
        f.normalize_modes();
        f
    }

    /// Scale the represented function by `s`.
    pub fn scaled(&self, s: T) -> Self {
        let mut f = self.clone();
        f.factors[0].mapv_inplace(|v| v * s);
        f
    }

    /// Substitute fixed coordinates for some dimensions; their basis values fold into the first remaining factor.
    pub fn fix_dimensions(&self, spaces: &SpaceSet<T>, values: &BTreeMap<String, T>) -> Result<Self> {
        let mut scale = vec![T::one(); self.modes()];
        let mut dims = Vec::new();
        let mut factors = Vec::new();
        for (d, name) in self.dims.iter().enumerate() {
            match values.get(name) {
                Some(&x) => {
                    let basis = &spaces.get(name)?.basis;
                    let mesh = basis.mesh();
                    if x < mesh.lo() || x > mesh.hi() {
                        return Err(TapsError::OutOfDomain {
                            dim: name.clone(),
                            value: x.as_f64(),
                            lo: mesh.lo().as_f64(),
                            hi: mesh.hi().as_f64(),
                        });
                    }
                    let row = basis.eval(x);
                    for (m, s) in scale.iter_mut().enumerate() {
                        *s *= row.dot(&self.factors[d].column(m).to_vec());
                    }
                }
                None => {
                    dims.push(name.clone());
                    factors.push(self.factors[d].clone());
                }
            }
        }
        if factors.is_empty() {
            return Err(TapsError::DimensionMismatch(format!("cannot fix every dimension of `{}`", self.name)));
        }
        for (m, s) in scale.iter().enumerate() {
            factors[0].column_mut(m).mapv_inplace(|v| v * *s);
        }
        Self::new(self.name.clone(), dims, factors)
    }

    /// Concatenate the modes of two fields over the same dimensions (represents the sum).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(TapsError::DimensionMismatch("fields over different dimensions".into()));
        }
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| ndarray::concatenate(Axis(1), &[a.view(), b.view()]).map_err(|e| TapsError::Shape(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.name.clone(), self.dims.clone(), factors)
    }
}

fn column_norm<T: Scalar>(u: &Array2<T>, m: usize) -> T {
    u.column(m).iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// `Uᵀ K V` for factor matrices `U` (n x M1), `V` (n x M2).
pub fn gram<T: Scalar>(u: &Array2<T>, k: &BandMatrix<T>, v: &Array2<T>) -> Array2<T> {
    let n = k.n();
    let mut kv = Array2::zeros((n, v.ncols()));
    for j in 0..v.ncols() {
        let col = v.column(j).to_vec();
        let out = k.matvec(&col);
        kv.column_mut(j).assign(&ndarray::Array1::from(out));
    }
    u.t().dot(&kv)
}

fn check_same_dims<T: Scalar>(a: &TdField<T>, b_dims: &[String]) -> Result<()> {
    let mut x = a.dims.clone();
    let mut y = b_dims.to_vec();
    x.sort();
    y.sort();
    if x != y {
        return Err(TapsError::DimensionMismatch(format!("{:?} vs {:?}", a.dims, b_dims)));
    }
    Ok(())
}

/// `⟨a, b⟩_{L²}` by mass-matrix contractions.
pub fn l2_inner<T: Scalar>(a: &TdField<T>, b: &TdField<T>, spaces: &SpaceSet<T>) -> Result<T> {
    check_same_dims(a, &b.dims)?;
    let mut c = Array2::from_elem((a.modes(), b.modes()), T::one());
    for (d, name) in a.dims.iter().enumerate() {
        let j = b.position(name).expect("checked");
        let g = gram(&a.factors[d], &spaces.get(name)?.mass, &b.factors[j]);
        c.zip_mut_with(&g, |x, &y| *x *= y);
    }
    Ok(c.sum())
}

/// `⟨a, f⟩_{L²}` with `f` separable; dimensions of `a` not mentioned by a term contribute `∫Ñ`.
pub fn l2_inner_separable<T: Scalar>(a: &TdField<T>, f: &SeparableFunction<T>, spaces: &SpaceSet<T>) -> Result<T> {
    check_known_dims(&a.dims, f)?;
    let mut total = T::zero();
    for term in &f.terms {
        let mut acc = vec![term.coefficient; a.modes()];
        for (d, name) in a.dims.iter().enumerate() {
            let load = spaces.get(name)?.load(&term.factor(name))?;
            let u = &a.factors[d];
            for (m, x) in acc.iter_mut().enumerate() {
                *x *= u.column(m).iter().zip(&load).map(|(&p, &q)| p * q).sum::<T>();
            }
        }
        total += acc.into_iter().sum::<T>();
    }
    Ok(total)
}

fn check_known_dims<T: Scalar>(dims: &[String], f: &SeparableFunction<T>) -> Result<()> {
    match f.dims().into_iter().find(|d| !dims.contains(d)) {
        Some(d) => Err(TapsError::DimensionMismatch(format!("function depends on `{d}`, which the field lacks"))),
        None => Ok(()),
    }
}

/// `⟨f, g⟩_{L²}` over the listed dimensions by quadrature of each 1D product.
pub fn l2_inner_functions<T: Scalar>(f: &SeparableFunction<T>, g: &SeparableFunction<T>, dims: &[String], spaces: &SpaceSet<T>) -> Result<T> {
    check_known_dims(dims, f)?;
    check_known_dims(dims, g)?;
    let mut total = T::zero();
    for a in &f.terms {
        for b in &g.terms {
            let mut v = a.coefficient * b.coefficient;
            for name in dims {
                let s = spaces.get(name)?;
                let fa = a.factor(name);
                let fb = b.factor(name);
                let t = &s.table;
                v *= t.points().iter().zip(t.weights()).map(|(&x, &w)| w * fa.eval(x) * fb.eval(x)).sum::<T>();
            }
            total += v;
        }
    }
    Ok(total)
}

pub fn l2_norm<T: Scalar>(a: &TdField<T>, spaces: &SpaceSet<T>) -> Result<T> {
    Ok(l2_inner(a, a, spaces)?.max(T::zero()).sqrt())
}

/// Per-dimension samples `sqrt(w_q) g_k(x_q)` of the separable terms of a sum, one column per term.
struct Samples {
    dims: Vec<nalgebra::DMatrix<f64>>,
}

impl Samples {
    fn new(n_dims: usize) -> Self {
        Self { dims: vec![nalgebra::DMatrix::zeros(0, 0); n_dims] }
    }

    fn push(&mut self, d: usize, cols: nalgebra::DMatrix<f64>) {
        let cur = &self.dims[d];
        self.dims[d] = if cur.ncols() == 0 {
            cols
        } else {
            let mut m = nalgebra::DMatrix::zeros(cur.nrows(), cur.ncols() + cols.ncols());
            m.columns_mut(0, cur.ncols()).copy_from(cur);
            m.columns_mut(cur.ncols(), cols.ncols()).copy_from(&cols);
            m
        };
    }

    /// `‖Σ_k ⊗_d g_k^d‖` by successive QR factorizations of the Khatri-Rao chain,
    /// which avoids cancellation between nearly equal terms.
    fn norm(&self) -> f64 {
        let k = self.dims[0].ncols();
        if k == 0 {
            return 0.0;
        }
        let mut r = self.dims[0].clone().qr().r();
        for g in &self.dims[1..] {
            let (rr, q) = (r.nrows(), g.nrows());
            let y = nalgebra::DMatrix::from_fn(rr * q, k, |i, c| r[(i / q, c)] * g[(i % q, c)]);
            r = y.qr().r();
        }
        r.column_sum().norm()
    }
}

fn sample_td<T: Scalar>(s: &mut Samples, a: &TdField<T>, dims: &[String], spaces: &SpaceSet<T>, sign: f64) -> Result<()> {
    for (d, name) in dims.iter().enumerate() {
        let j = a.position(name).ok_or_else(|| TapsError::DimensionMismatch(format!("field `{}` lacks `{name}`", a.name)))?;
        let t = &spaces.get(name)?.table;
        let u = &a.factors[j];
        let c = if d == 0 { sign } else { 1.0 };
        let cols = nalgebra::DMatrix::from_fn(t.n_points(), a.modes(), |q, m| {
            let row = t.row(q);
            let v: T = row.n.iter().enumerate().map(|(k, &nk)| nk * u[[row.start + k, m]]).sum();
            c * t.weights()[q].as_f64().sqrt() * v.as_f64()
        });
        s.push(d, cols);
    }
    Ok(())
}

fn sample_function<T: Scalar>(s: &mut Samples, f: &SeparableFunction<T>, dims: &[String], spaces: &SpaceSet<T>, sign: f64) -> Result<()> {
    check_known_dims(dims, f)?;
    for (d, name) in dims.iter().enumerate() {
        let t = &spaces.get(name)?.table;
        let cols = nalgebra::DMatrix::from_fn(t.n_points(), f.rank(), |q, r| {
            let term = &f.terms[r];
            let c = if d == 0 { sign * term.coefficient.as_f64() } else { 1.0 };
            let x = t.points()[q];
            c * t.weights()[q].as_f64().sqrt() * term.factor(name).eval(x).as_f64()
        });
        s.push(d, cols);
    }
    Ok(())
}

/// `‖a - b‖_{L²}` without cancellation.
pub fn l2_distance<T: Scalar>(a: &TdField<T>, b: &TdField<T>, spaces: &SpaceSet<T>) -> Result<T> {
    check_same_dims(a, &b.dims)?;
    let mut s = Samples::new(a.dims.len());
    sample_td(&mut s, a, &a.dims, spaces, 1.0)?;
    sample_td(&mut s, b, &a.dims, spaces, -1.0)?;
    Ok(T::lit(s.norm()))
}

/// `‖a - f‖_{L²}` with `f` separable.
pub fn l2_distance_separable<T: Scalar>(a: &TdField<T>, f: &SeparableFunction<T>, spaces: &SpaceSet<T>) -> Result<T> {
    let mut s = Samples::new(a.dims.len());
    sample_td(&mut s, a, &a.dims, spaces, 1.0)?;
    sample_function(&mut s, f, &a.dims, spaces, -1.0)?;
    Ok(T::lit(s.norm()))
}

/// `‖approx - exact‖ / ‖exact‖`.
pub fn relative_l2_error<T: Scalar>(approx: &TdField<T>, exact: &SeparableFunction<T>, spaces: &SpaceSet<T>) -> Result<T> {
    let ee = l2_inner_functions(exact, exact, &approx.dims, spaces)?;
    if !(ee > T::zero()) {
        return Err(TapsError::InvalidProblem("exact solution has zero L2 norm".into()));
    }
    Ok(l2_distance_separable(approx, exact, spaces)? / ee.sqrt())
}

/// Nodal interpolant of a separable function as a TD field with one mode per term.
pub fn interpolate_separable<T: Scalar>(name: &str, f: &SeparableFunction<T>, dims: &[String], spaces: &SpaceSet<T>) -> Result<TdField<T>> {
    check_known_dims(dims, f)?;
    let r = f.rank().max(1);
    let mut factors = Vec::with_capacity(dims.len());
    for (d, dim) in dims.iter().enumerate() {
        let s = spaces.get(dim)?;
        let nodes = s.basis.mesh().nodes();
        let mut u = Array2::zeros((nodes.len(), r));
        for (m, term) in f.terms.iter().enumerate() {
            let fac = term.factor(dim);
            let c = if d == 0 { term.coefficient } else { T::one() };
            for (i, &x) in nodes.iter().enumerate() {
                u[[i, m]] = c * fac.eval(x);
            }
        }
        factors.push(u);
    }
    TdField::new(name, dims.to_vec(), factors)
}

/// Seeded generator used for factor initialization.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
