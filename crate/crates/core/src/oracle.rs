//! Full-order reference: the tensor-product Galerkin system assembled from the same
//! 1D operators and solved directly. Only for tiny instances.

use ndarray::{ArrayD, Axis, IxDyn};

use crate::assembly::{IndexMap, SpaceSet};
use crate::error::{Result, TapsError};
use crate::function::SeparableFunction;
use crate::linalg::BandMatrix;
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;
use crate::td::{l2_inner_functions, TdField};

/// Largest tensor grid (node count per field) the oracle accepts.
pub const ORACLE_MAX_NODES: usize = 20_000;

/// Nodal values of one field on the full tensor grid; axes follow `dims`.
#[derive(Debug, Clone)]
pub struct FullGridField<T> {
    pub name: String,
    pub dims: Vec<String>,
    pub values: ArrayD<T>,
}

#[derive(Debug, Clone)]
pub struct OracleSolution<T> {
    pub fields: Vec<FullGridField<T>>,
    pub spaces: SpaceSet<T>,
}

impl<T: Scalar> OracleSolution<T> {
    pub fn field(&self, name: &str) -> Option<&FullGridField<T>> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Apply a 1D band matrix along one axis.
fn apply_axis<T: Scalar>(a: &ArrayD<T>, axis: usize, k: &BandMatrix<T>) -> ArrayD<T> {
    let mut out = a.clone();
    for mut lane in out.lanes_mut(Axis(axis)) {
        let v = lane.to_vec();
        let y = k.matvec(&v);
        lane.iter_mut().zip(y).for_each(|(o, y)| *o = y);
    }
    out
}

/// Contract one axis with a vector, removing it.
fn contract_axis<T: Scalar>(a: &ArrayD<T>, axis: usize, v: &[T]) -> ArrayD<T> {
    a.map_axis(Axis(axis), |lane| lane.iter().zip(v).map(|(&x, &y)| x * y).sum())
}

impl<T: Scalar> FullGridField<T> {
    /// Nodal expansion of a separated field (exact: both live in the same discrete space).
    pub fn from_td(td: &TdField<T>) -> Self {
        let shape: Vec<usize> = td.factors.iter().map(|u| u.nrows()).collect();
        let mut values = ArrayD::zeros(IxDyn(&shape));
        for m in 0..td.modes() {
            for (idx, v) in values.indexed_iter_mut() {
                let mut p = T::one();
                for (d, u) in td.factors.iter().enumerate() {
                    p *= u[[idx[d], m]];
                }
                *v += p;
            }
        }
        Self { name: td.name.clone(), dims: td.dims.clone(), values }
    }

    pub fn evaluate(&self, spaces: &SpaceSet<T>, point: &[T]) -> Result<T> {
        if point.len() != self.dims.len() {
            return Err(TapsError::DimensionMismatch(format!("{} coordinates for {} dimensions", point.len(), self.dims.len())));
        }
        let mut cur = self.values.clone();
        for (d, name) in self.dims.iter().enumerate().rev() {
            let space = spaces.get(name)?;
            let (lo, hi) = (space.spec.lo, space.spec.hi);
            let x = point[d];
            if !(x >= lo && x <= hi) {
                return Err(TapsError::OutOfDomain { dim: name.clone(), value: x.as_f64(), lo: lo.as_f64(), hi: hi.as_f64() });
            }
            let row = space.basis.eval(x);
            let mut w = vec![T::zero(); space.n_nodes()];
            for (k, &n) in row.n.iter().enumerate() {
                w[row.start + k] = n;
            }
            cur = contract_axis(&cur, d, &w);
        }
        Ok(cur.into_iter().next().unwrap_or_else(T::zero))
    }

    /// `‖self‖²_{L²}` through the mass matrices of every dimension.
    pub fn l2_norm_squared(&self, spaces: &SpaceSet<T>) -> Result<T> {
        let mut mv = self.values.clone();
        for (d, name) in self.dims.iter().enumerate() {
            mv = apply_axis(&mv, d, &spaces.get(name)?.mass);
        }
        Ok(mv.iter().zip(self.values.iter()).map(|(&a, &b)| a * b).sum())
    }

    pub fn l2_norm(&self, spaces: &SpaceSet<T>) -> Result<T> {
        Ok(self.l2_norm_squared(spaces)?.max(T::zero()).sqrt())
    }

    /// `⟨self, f⟩_{L²}` using the load vectors of each term.
    pub fn l2_inner_separable(&self, f: &SeparableFunction<T>, spaces: &SpaceSet<T>) -> Result<T> {
        let mut total = T::zero();
        for term in &f.terms {
            let mut cur = self.values.clone();
            for (d, name) in self.dims.iter().enumerate().rev() {
                let load = spaces.get(name)?.load(&term.factor(name))?;
                cur = contract_axis(&cur, d, &load);
            }
            total += term.coefficient * cur.into_iter().next().unwrap_or_else(T::zero);
        }
        Ok(total)
    }

    /// `‖self - td‖_{L²}`, computed on the nodal difference without cancellation.
    pub fn l2_distance_td(&self, td: &TdField<T>, spaces: &SpaceSet<T>) -> Result<T> {
        if td.dims != self.dims {
            return Err(TapsError::DimensionMismatch(format!("{:?} vs {:?}", self.dims, td.dims)));
        }
        let other = Self::from_td(td);
        if other.values.shape() != self.values.shape() {
            return Err(TapsError::Shape(format!("{:?} vs {:?}", self.values.shape(), other.values.shape())));
        }
        let diff = Self { name: self.name.clone(), dims: self.dims.clone(), values: &self.values - &other.values };
        diff.l2_norm(spaces)
    }

    /// `‖self - f‖ / ‖f‖`.
    pub fn relative_l2_error(&self, exact: &SeparableFunction<T>, spaces: &SpaceSet<T>) -> Result<T> {
        let ff = l2_inner_functions(exact, exact, &self.dims, spaces)?;
        if !(ff > T::zero()) {
            return Err(TapsError::InvalidProblem("exact solution has zero norm".into()));
        }
        let uu = self.l2_norm_squared(spaces)?;
        let uf = self.l2_inner_separable(exact, spaces)?;
        let r = uu - uf - uf + ff;
        Ok(r.max(T::zero()).sqrt() / ff.sqrt())
    }
}

/// Per-dimension sparse rows of a band matrix restricted to free indices.
fn reduced_rows<T: Scalar>(k: &BandMatrix<T>, map: &IndexMap) -> Vec<Vec<(usize, T)>> {
    let mut pos = vec![usize::MAX; map.n_full()];
    for (r, &i) in map.free().iter().enumerate() {
        pos[i] = r;
    }
    map.free()
        .iter()
        .map(|&i| {
            k.row_range(i)
                .filter(|&j| pos[j] != usize::MAX)
                .map(|j| (pos[j], k.get(i, j)))
                .filter(|&(_, v)| v != T::zero())
                .collect()
        })
        .collect()
}

/// Solve the full tensor-product Galerkin system of a linear problem.
pub fn oracle_full_solve<T: Scalar>(spec: &ProblemSpec<T>) -> Result<OracleSolution<T>> {
    spec.ensure_valid()?;
    if spec.is_nonlinear() {
        return Err(TapsError::InvalidProblem("the full-order oracle handles linear problems only".into()));
    }
    let dims = spec.fields[0].dims.clone();
    if spec.fields.iter().any(|f| f.dims != dims) {
        return Err(TapsError::InvalidProblem("the full-order oracle needs every field on the same dimensions".into()));
    }
    let spaces = SpaceSet::new(&spec.dimensions)?;
    let nodes: usize = dims.iter().map(|d| spaces.get(d).map(|s| s.n_nodes())).product::<Result<usize>>()?;
    if nodes > ORACLE_MAX_NODES {
        return Err(TapsError::OracleTooLarge(nodes, ORACLE_MAX_NODES));
    }
    let maps: Vec<IndexMap> = dims.iter().map(|d| spaces.get(d).map(|s| s.index_map())).collect::<Result<_>>()?;
    let nf: Vec<usize> = maps.iter().map(|m| m.n_free()).collect();
    let n_fields = spec.fields.len();
    // Row-major over dimensions, field index fastest.
    let mut stride = vec![n_fields; dims.len()];
    for d in (0..dims.len().saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * nf[d + 1];
    }
    let size = n_fields * nf.iter().product::<usize>();

    let mut terms = Vec::with_capacity(spec.lhs.len());
    let mut band = vec![0usize; dims.len()];
    for t in &spec.lhs {
        let f = spec.field_index(&t.test_field).expect("validated");
        let g = spec.field_index(&t.trial_field).expect("validated");
        let mut rows = Vec::with_capacity(dims.len());
        for (d, name) in dims.iter().enumerate() {
            let k = spaces.get(name)?.operator(&t.operator(name), None)?;
            band[d] = band[d].max(k.kl()).max(k.ku());
            rows.push(reduced_rows(&k, &maps[d]));
        }
        terms.push((t.coefficient, f, g, rows));
    }
    let width = (0..dims.len()).map(|d| stride[d] * band[d]).sum::<usize>() + n_fields - 1;
    let mut a = BandMatrix::zeros(size, width, width);
    let mut idx = vec![0usize; dims.len()];
    for flat in 0..nf.iter().product::<usize>() {
        let mut r = flat;
        for d in (0..dims.len()).rev() {
            idx[d] = r % nf[d];
            r /= nf[d];
        }
        let row_base: usize = (0..dims.len()).map(|d| idx[d] * stride[d]).sum();
        for (c, f, g, rows) in &terms {
            let lists: Vec<&Vec<(usize, T)>> = (0..dims.len()).map(|d| &rows[d][idx[d]]).collect();
            accumulate(&mut a, &lists, &stride, 0, 0, *c, row_base + f, *g);
        }
    }

    let mut b = vec![T::zero(); size];
    for (fi, f) in spec.fields.iter().enumerate() {
        let Some(rhs) = spec.rhs.get(&f.name) else { continue };
        for term in &rhs.terms {
            let loads: Vec<Vec<T>> = dims
                .iter()
                .enumerate()
                .map(|(d, name)| Ok(maps[d].reduce(&spaces.get(name)?.load(&term.factor(name))?)))
                .collect::<Result<_>>()?;
            for flat in 0..size / n_fields {
                let mut r = flat;
                let mut v = term.coefficient;
                let mut at = fi;
                for d in (0..dims.len()).rev() {
                    let i = r % nf[d];
                    r /= nf[d];
                    v *= loads[d][i];
                    at += i * stride[d];
                }
                b[at] += v;
            }
        }
    }
    let x = a.lu()?.solve(&b);

    let full_shape: Vec<usize> = maps.iter().map(|m| m.n_full()).collect();
    let mut fields = Vec::with_capacity(n_fields);
    for (fi, f) in spec.fields.iter().enumerate() {
        let mut values = ArrayD::zeros(IxDyn(&full_shape));
        for flat in 0..size / n_fields {
            let mut r = flat;
            let mut at = fi;
            let mut full = vec![0usize; dims.len()];
            for d in (0..dims.len()).rev() {
                let i = r % nf[d];
                r /= nf[d];
                at += i * stride[d];
                full[d] = maps[d].free()[i];
            }
            values[IxDyn(&full)] = x[at];
        }
        fields.push(FullGridField { name: f.name.clone(), dims: dims.clone(), values });
    }
    Ok(OracleSolution { fields, spaces })
}

#[allow(clippy::too_many_arguments)]
fn accumulate<T: Scalar>(a: &mut BandMatrix<T>, lists: &[&Vec<(usize, T)>], stride: &[usize], d: usize, col: usize, v: T, row: usize, field: usize) {
    if d == lists.len() {
        a.add(row, col + field, v);
        return;
    }
    for &(j, k) in lists[d].iter() {
        accumulate(a, lists, stride, d + 1, col + j * stride[d], v * k, row, field);
    }
}
