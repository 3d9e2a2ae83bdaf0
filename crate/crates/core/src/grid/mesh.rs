use crate::error::{Result, TapsError};
use crate::grid::DimensionSpec;
use crate::scalar::Scalar;

/// Node coordinates of a 1D mesh; element `e` spans nodes `e` and `e + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D<T> {
    nodes: Vec<T>,
}

impl<T: Scalar> Mesh1D<T> {
    pub fn uniform(lo: T, hi: T, n_elements: usize) -> Result<Self> {
        if n_elements == 0 {
            return Err(TapsError::InvalidMesh("n_elements must be at least 1".into()));
        }
        if !(lo < hi) {
            return Err(TapsError::InvalidMesh(format!("empty interval [{lo}, {hi}]")));
        }
        let h = (hi - lo) / T::from_usize_lossy(n_elements);
        let mut nodes: Vec<T> = (0..=n_elements)
            .map(|i| lo + T::from_usize_lossy(i) * h)
            .collect();
        // pin the last node so the domain end is exact
        nodes[n_elements] = hi;
        Ok(Self { nodes })
    }

    /// Arbitrary strictly increasing node list.
    pub fn from_nodes(nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(TapsError::InvalidMesh("need at least two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(TapsError::InvalidMesh("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn lo(&self) -> T {
        self.nodes[0]
    }

    pub fn hi(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn element(&self, e: usize) -> (T, T) {
        (self.nodes[e], self.nodes[e + 1])
    }

    /// Element containing `x`; points on an interior node belong to the element on the right.
    pub fn locate(&self, x: T) -> usize {
        let k = self.nodes.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(self.n_elements() - 1)
    }

    /// Index of the node at `x` if `x` coincides with one (relative tolerance `tol`).
    pub fn node_at(&self, x: T, tol: T) -> Option<usize> {
        let scale = self.hi() - self.lo();
        self.nodes
            .iter()
            .position(|&v| (v - x).abs() <= tol * scale)
    }
}

pub fn build_mesh<T: Scalar>(spec: &DimensionSpec<T>) -> Result<Mesh1D<T>> {
    Mesh1D::uniform(spec.lo, spec.hi, spec.n_elements)
}
