//! 1D operator matrices and load vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapsError};
use crate::function::Factor;
use crate::grid::{build_mesh, eval_basis, Basis1D, DimensionSpec, ShapeTable};
use crate::linalg::BandMatrix;
use crate::scalar::Scalar;

/// Pointwise weight inside a weighted operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum UnivariateWeight<T> {
    /// `w(x) = x`
    Coordinate,
    /// 1 on `[lo, hi]`, 0 elsewhere.
    Indicator { lo: T, hi: T },
    /// A closed-form factor.
    Function(Factor<T>),
    /// Column `mode` of the current iterate of `field`, interpolated through the basis.
    PreviousSolutionMode { field: String, mode: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum OperatorKind<T> {
    /// `∫ N_i N_j`
    Mass,
    /// `∫ B_i B_j`
    Stiffness,
    /// `∫ N_i B_j`
    #[serde(rename = "mixed_nb")]
    MixedNB,
    /// `∫ B_i N_j`
    #[serde(rename = "mixed_bn")]
    MixedBN,
    /// `∫ N_i w N_j`
    WeightedMass(UnivariateWeight<T>),
    /// `∫ B_i w B_j`
    WeightedStiffness(UnivariateWeight<T>),
}

impl<T: Scalar> OperatorKind<T> {
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, OperatorKind::MixedNB | OperatorKind::MixedBN)
    }

    /// True when the operator depends on the current iterate.
    pub fn is_iterate_dependent(&self) -> bool {
        matches!(
            self,
            OperatorKind::WeightedMass(UnivariateWeight::PreviousSolutionMode { .. })
                | OperatorKind::WeightedStiffness(UnivariateWeight::PreviousSolutionMode { .. })
        )
    }
}

/// Resolves `(field, mode)` to the nodal column of that mode in the current dimension.
pub type ModeSource<'a, T> = &'a dyn Fn(&str, usize) -> Option<Vec<T>>;

#[derive(Debug, Clone)]
pub struct OperatorMatrix1D<T> {
    pub dim: String,
    pub kind: OperatorKind<T>,
    pub matrix: BandMatrix<T>,
    pub symmetric: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector1D<T> {
    pub dim: String,
    pub values: Vec<T>,
    pub source: String,
}

fn weight_values<T: Scalar>(table: &ShapeTable<T>, w: &UnivariateWeight<T>, modes: Option<ModeSource<'_, T>>) -> Result<Vec<T>> {
    let pts = table.points();
    let vals: Vec<T> = match w {
        UnivariateWeight::Coordinate => pts.to_vec(),
        UnivariateWeight::Indicator { lo, hi } => pts
            .iter()
            .map(|&x| if x >= *lo && x <= *hi { T::one() } else { T::zero() })
            .collect(),
        UnivariateWeight::Function(f) => pts.iter().map(|&x| f.eval(x)).collect(),
        UnivariateWeight::PreviousSolutionMode { field, mode } => {
            let col = modes
                .and_then(|m| m(field, *mode))
                .ok_or_else(|| TapsError::Weight(format!("no iterate available for field `{field}` mode {mode}")))?;
            if col.len() != table.n_nodes() {
                return Err(TapsError::Weight(format!(
                    "iterate column for `{field}` has length {}, expected {}",
                    col.len(),
                    table.n_nodes()
                )));
            }
            table.interpolate(&col)
        }
    };
    if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
        return Err(TapsError::Weight(format!("non-finite weight value {v}")));
    }
    Ok(vals)
}

fn table_half_bandwidth<T: Scalar>(table: &ShapeTable<T>) -> usize {
    table.rows().iter().map(|r| r.n.len().saturating_sub(1)).max().unwrap_or(0)
}

/// Gauss-quadrature assembly of a 1D operator.
pub fn assemble_operator<T: Scalar>(
    dim: &str,
    table: &ShapeTable<T>,
    kind: &OperatorKind<T>,
    modes: Option<ModeSource<'_, T>>,
) -> Result<OperatorMatrix1D<T>> {
    if matches!(kind, OperatorKind::MixedBN) {
        let nb = assemble_operator(dim, table, &OperatorKind::MixedNB, modes)?;
        return Ok(OperatorMatrix1D { dim: dim.to_string(), kind: kind.clone(), matrix: nb.matrix.transpose(), symmetric: false });
    }
    let n = table.n_nodes();
    let bw = table_half_bandwidth(table);
    let mut a = BandMatrix::zeros(n, bw, bw);
    let weight = match kind {
        OperatorKind::WeightedMass(w) | OperatorKind::WeightedStiffness(w) => Some(weight_values(table, w, modes)?),
        _ => None,
    };
    for (q, row) in table.rows().iter().enumerate() {
        let mut wq = table.weights()[q];
        if let Some(w) = &weight {
            wq *= w[q];
        }
        if wq == T::zero() {
            continue;
        }
        let (test, trial) = match kind {
            OperatorKind::Mass | OperatorKind::WeightedMass(_) => (&row.n, &row.n),
            OperatorKind::Stiffness | OperatorKind::WeightedStiffness(_) => (&row.b, &row.b),
            OperatorKind::MixedNB => (&row.n, &row.b),
            OperatorKind::MixedBN => unreachable!(),
        };
        for (i, &ti) in test.iter().enumerate() {
            let s = wq * ti;
            for (j, &tj) in trial.iter().enumerate() {
                a.add(row.start + i, row.start + j, s * tj);
            }
        }
    }
    Ok(OperatorMatrix1D { dim: dim.to_string(), kind: kind.clone(), matrix: a, symmetric: kind.is_symmetric() })
}

/// `∫ Ñ_k f dx` for every node `k`.
pub fn assemble_load<T: Scalar>(dim: &str, table: &ShapeTable<T>, factor: &Factor<T>) -> Result<LoadVector1D<T>> {
    let mut v = vec![T::zero(); table.n_nodes()];
    for (q, row) in table.rows().iter().enumerate() {
        let x = table.points()[q];
        let f = factor.eval(x);
        if !f.is_finite() {
            return Err(TapsError::NonFinite(format!("forcing factor is {f} at {dim} = {x}")));
        }
        let s = table.weights()[q] * f;
        for (k, &nk) in row.n.iter().enumerate() {
            v[row.start + k] += s * nk;
        }
    }
    Ok(LoadVector1D { dim: dim.to_string(), values: v, source: format!("{factor:?}") })
}

/// Free-node bookkeeping after eliminating constrained nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    n_full: usize,
    free: Vec<usize>,
}

impl IndexMap {
    pub fn new(n_full: usize, constrained: &[usize]) -> Result<Self> {
        if let Some(&i) = constrained.iter().find(|&&i| i >= n_full) {
            return Err(TapsError::InvalidMesh(format!("constrained node {i} out of range (n = {n_full})")));
        }
        let free: Vec<usize> = (0..n_full).filter(|i| !constrained.contains(i)).collect();
        if free.is_empty() {
            return Err(TapsError::AllConstrained(n_full));
        }
        Ok(Self { n_full, free })
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn reduce<T: Copy>(&self, full: &[T]) -> Vec<T> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Scatter a reduced vector into a full one with zeros on constrained nodes.
    pub fn expand<T: Scalar>(&self, reduced: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_full];
        for (&i, &v) in self.free.iter().zip(reduced) {
            out[i] = v;
        }
        out
    }
}

/// Remove constrained rows and columns.
pub fn apply_dirichlet<T: Scalar>(op: &OperatorMatrix1D<T>, constrained: &[usize]) -> Result<(OperatorMatrix1D<T>, IndexMap)> {
    let map = IndexMap::new(op.matrix.n(), constrained)?;
    let reduced = OperatorMatrix1D {
        dim: op.dim.clone(),
        kind: op.kind.clone(),
        matrix: op.matrix.submatrix(map.free()),
        symmetric: op.symmetric,
    };
    Ok((reduced, map))
}

/// Remove constrained entries of a load vector.
pub fn apply_dirichlet_load<T: Scalar>(load: &LoadVector1D<T>, constrained: &[usize]) -> Result<(LoadVector1D<T>, IndexMap)> {
    let map = IndexMap::new(load.values.len(), constrained)?;
    let reduced = LoadVector1D { dim: load.dim.clone(), values: map.reduce(&load.values), source: load.source.clone() };
    Ok((reduced, map))
}

/// A discretized dimension: mesh, basis, quadrature table and its mass matrix.
#[derive(Debug, Clone)]
pub struct Space1D<T> {
    pub spec: DimensionSpec<T>,
    pub basis: Basis1D<T>,
    pub table: ShapeTable<T>,
    pub mass: BandMatrix<T>,
    pub constrained: Vec<usize>,
}

impl<T: Scalar> Space1D<T> {
    pub fn new(spec: &DimensionSpec<T>) -> Result<Self> {
        let mesh = build_mesh(spec)?;
        let basis = Basis1D::new(mesh, spec.basis)?;
        let rule = crate::grid::default_rule(spec.basis.p)?;
        let table = eval_basis(&basis, &rule)?;
        let mass = assemble_operator(&spec.name, &table, &OperatorKind::Mass, None)?.matrix;
        let constrained = spec.constrained_nodes()?;
        IndexMap::new(basis.n_nodes(), &constrained)?;
        Ok(Self { spec: spec.clone(), basis, table, mass, constrained })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn n_nodes(&self) -> usize {
        self.basis.n_nodes()
    }

    pub fn index_map(&self) -> IndexMap {
        IndexMap::new(self.n_nodes(), &self.constrained).expect("validated at construction")
    }

    /// Load vector of a factor on this dimension.
    pub fn load(&self, factor: &Factor<T>) -> Result<Vec<T>> {
        Ok(assemble_load(&self.spec.name, &self.table, factor)?.values)
    }

    pub fn operator(&self, kind: &OperatorKind<T>, modes: Option<ModeSource<'_, T>>) -> Result<BandMatrix<T>> {
        Ok(assemble_operator(&self.spec.name, &self.table, kind, modes)?.matrix)
    }
}

/// The discretized dimensions of a problem, looked up by name.
#[derive(Debug, Clone)]
pub struct SpaceSet<T> {
    spaces: Vec<Space1D<T>>,
}

impl<T: Scalar> SpaceSet<T> {
    pub fn new(dims: &[DimensionSpec<T>]) -> Result<Self> {
        let spaces = dims.iter().map(Space1D::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { spaces })
    }

    pub fn get(&self, name: &str) -> Result<&Space1D<T>> {
        self.spaces
            .iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| TapsError::DimensionMismatch(format!("unknown dimension `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Space1D<T>> {
        self.spaces.iter()
    }

    pub fn len(&self) -> usize {
        self.spaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spaces.is_empty()
    }
}
