//! One-dimensional meshes, Gauss-Legendre rules and the convolution-patch
//! (C-HiDeNN) basis evaluated at quadrature points.

mod basis;
mod mesh;
mod quadrature;

pub use basis::{eval_basis, Basis1D, BasisRow, ShapeTable};
pub(crate) use basis::default_rule;
pub use mesh::{build_mesh, Mesh1D};
pub use quadrature::{gauss_rule, QuadratureRule};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapsError};
use crate::scalar::Scalar;

/// What an independent variable represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Spatial,
    Parametric,
    Temporal,
}

/// Hyperparameters of the convolution-patch basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawBasisConfig<T>", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BasisConfig<T> {
    /// Reproducing polynomial order.
    pub p: usize,
    /// Patch size (neighbors per side). Only the nearest `p + 1` nodes are used.
    pub s: usize,
    /// Dilation of patch-local coordinates; defaults to the element size.
    pub a: Option<T>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasisConfig<T> {
    p: usize,
    #[serde(default)]
    s: Option<usize>,
    #[serde(default = "Option::default")]
    a: Option<T>,
}

impl<T> From<RawBasisConfig<T>> for BasisConfig<T> {
    fn from(r: RawBasisConfig<T>) -> Self {
        Self { p: r.p, s: r.s.unwrap_or(r.p), a: r.a }
    }
}

impl<T: Scalar> BasisConfig<T> {
    pub fn new(p: usize) -> Self {
        Self { p, s: p, a: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(TapsError::InvalidBasis("p must be at least 1".into()));
        }
        if self.s < self.p {
            return Err(TapsError::InvalidBasis(format!(
                "patch size s = {} smaller than p = {}",
                self.s, self.p
            )));
        }
        if let Some(a) = self.a {
            if !(a > T::zero()) || !a.is_finite() {
                return Err(TapsError::InvalidBasis(format!("dilation a = {a} must be positive")));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for BasisConfig<T> {
    fn default() -> Self {
        Self::new(1)
    }
}

/// A homogeneous Dirichlet node, given symbolically so it survives refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryNode {
    Side(Side),
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lo,
    Hi,
}

impl BoundaryNode {
    pub const LO: BoundaryNode = BoundaryNode::Side(Side::Lo);
    pub const HI: BoundaryNode = BoundaryNode::Side(Side::Hi);

    pub fn resolve(self, n_nodes: usize) -> usize {
        match self {
            BoundaryNode::Side(Side::Lo) => 0,
            BoundaryNode::Side(Side::Hi) => n_nodes.saturating_sub(1),
            BoundaryNode::Index(i) => i,
        }
    }
}

/// One independent variable with its mesh and basis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct DimensionSpec<T> {
    pub name: String,
    pub role: Role,
    pub lo: T,
    pub hi: T,
    pub n_elements: usize,
    #[serde(default)]
    pub basis: BasisConfig<T>,
    #[serde(default)]
    pub dirichlet: Vec<BoundaryNode>,
}

impl<T: Scalar> DimensionSpec<T> {
    pub fn new(name: impl Into<String>, role: Role, lo: T, hi: T, n_elements: usize) -> Self {
        Self {
            name: name.into(),
            role,
            lo,
            hi,
            n_elements,
            basis: BasisConfig::default(),
            dirichlet: Vec::new(),
        }
    }

    pub fn with_dirichlet(mut self, nodes: &[BoundaryNode]) -> Self {
        self.dirichlet = nodes.to_vec();
        self
    }

    pub fn with_basis(mut self, basis: BasisConfig<T>) -> Self {
        self.basis = basis;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    /// Sorted, de-duplicated constrained node indices.
    pub fn constrained_nodes(&self) -> Result<Vec<usize>> {
        let n = self.n_nodes();
        let mut idx = Vec::with_capacity(self.dirichlet.len());
        for b in &self.dirichlet {
            let i = b.resolve(n);
            if i >= n {
                return Err(TapsError::InvalidMesh(format!(
                    "dirichlet node {i} out of range for `{}` with {n} nodes",
                    self.name
                )));
            }
            if idx.contains(&i) {
                return Err(TapsError::InvalidMesh(format!(
                    "dirichlet node {i} listed twice for `{}`",
                    self.name
                )));
            }
            idx.push(i);
        }
        idx.sort_unstable();
        Ok(idx)
    }

    pub fn contains(&self, x: T) -> bool {
        let tol = (self.hi - self.lo) * T::lit(1e-12);
        x >= self.lo - tol && x <= self.hi + tol
    }
}
