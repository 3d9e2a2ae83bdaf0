use crate::error::{Result, TapsError};
use crate::grid::{gauss_rule, BasisConfig, Mesh1D, QuadratureRule};
use crate::scalar::Scalar;

/// Lagrange patch function: `p + 1` consecutive nodes interpolated in
/// dilated coordinates `z = (x - center) / scale`.
#[derive(Debug, Clone)]
struct Patch<T> {
    start: usize,
    center: T,
    scale: T,
    /// `coeffs[k * (p + 1) + r]` is the `z^r` coefficient of the k-th patch function.
    coeffs: Vec<T>,
}

impl<T: Scalar> Patch<T> {
    fn build(nodes: &[T], start: usize, owner: usize, p: usize, scale: T) -> Result<Self> {
        let m = p + 1;
        let center = nodes[owner];
        // Vandermonde V[j][r] = z_j^r; the patch functions are the columns of V^{-1}.
        let mut v = vec![T::zero(); m * m];
        for j in 0..m {
            let z = (nodes[start + j] - center) / scale;
            let mut zr = T::one();
            for r in 0..m {
                v[j * m + r] = zr;
                zr *= z;
            }
        }
        let inv = invert(&mut v, m).ok_or(TapsError::SingularPatch { node: owner })?;
        let mut coeffs = vec![T::zero(); m * m];
        for k in 0..m {
            for r in 0..m {
                coeffs[k * m + r] = inv[r * m + k];
            }
        }
        Ok(Self { start, center, scale, coeffs })
    }

    /// Values and x-derivatives of all patch functions at `x`.
    fn eval(&self, x: T, vals: &mut [T], ders: &mut [T]) {
        let m = vals.len();
        let z = (x - self.center) / self.scale;
        for k in 0..m {
            let c = &self.coeffs[k * m..(k + 1) * m];
            // Horner for value and derivative
            let (mut w, mut dw) = (T::zero(), T::zero());
            for r in (0..m).rev() {
                dw = dw * z + w;
                w = w * z + c[r];
            }
            vals[k] = w;
            ders[k] = dw / self.scale;
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` on a (numerically) zero pivot.
fn invert<T: Scalar>(a: &mut [T], n: usize) -> Option<Vec<T>> {
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    let scale = a.iter().fold(T::zero(), |s, &x| s.max(x.abs()));
    let tiny = scale * T::epsilon() * T::lit(16.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if !(a[piv * n + col].abs() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
                inv.swap(piv * n + k, col * n + k);
            }
        }
        let d = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= d;
            inv[col * n + k] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[i * n + col];
                if f != T::zero() {
                    for k in 0..n {
                        let (ack, ick) = (a[col * n + k], inv[col * n + k]);
                        a[i * n + k] -= f * ack;
                        inv[i * n + k] -= f * ick;
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Nonzero basis values at one point: columns `start..start + n.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisRow<T> {
    pub start: usize,
    pub n: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> BasisRow<T> {
    /// `Ñ(x) · v` for a nodal vector `v`.
    pub fn dot(&self, v: &[T]) -> T {
        self.n.iter().zip(&v[self.start..]).map(|(&a, &b)| a * b).sum()
    }

    pub fn dot_derivative(&self, v: &[T]) -> T {
        self.b.iter().zip(&v[self.start..]).map(|(&a, &b)| a * b).sum()
    }
}

/// Convolution-patch basis on a 1D mesh.
///
/// On element `[x_e, x_{e+1}]` the shape functions are
/// `Ñ_k = N_e W^e_k + N_{e+1} W^{e+1}_k` with `N` the linear hats and `W^i`
/// the Lagrange patch functions of node `i`. Patches hold the `p + 1` nodes
/// nearest to their owner: centered on the node for even `p`, centered on the
/// element for odd `p` (so `p = 1` gives the linear hats), shifted inward at
/// the boundary.
#[derive(Debug, Clone)]
pub struct Basis1D<T> {
    mesh: Mesh1D<T>,
    config: BasisConfig<T>,
    patches: Vec<[Patch<T>; 2]>,
}

impl<T: Scalar> Basis1D<T> {
    pub fn new(mesh: Mesh1D<T>, config: BasisConfig<T>) -> Result<Self> {
        config.validate()?;
        let p = config.p;
        let n = mesh.n_nodes();
        if n < p + 1 {
            return Err(TapsError::InvalidBasis(format!(
                "order p = {p} needs at least {} nodes, mesh has {n}",
                p + 1
            )));
        }
        let nodes = mesh.nodes();
        let mut patches = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let h = nodes[e + 1] - nodes[e];
            let scale = config.a.unwrap_or(h);
            let mk = |owner: usize| -> Result<Patch<T>> {
                let centered = if p.is_multiple_of(2) { owner as isize - (p / 2) as isize } else { e as isize - ((p - 1) / 2) as isize };
                let start = centered.clamp(0, (n - 1 - p) as isize) as usize;
                Patch::build(nodes, start, owner, p, scale)
            };
            patches.push([mk(e)?, mk(e + 1)?]);
        }
        Ok(Self { mesh, config, patches })
    }

    pub fn mesh(&self) -> &Mesh1D<T> {
        &self.mesh
    }

    pub fn config(&self) -> &BasisConfig<T> {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.p
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Maximum distance |i - j| between two nodes sharing an element span.
    pub fn half_bandwidth(&self) -> usize {
        self.patches
            .iter()
            .map(|[a, b]| {
                let lo = a.start.min(b.start);
                let hi = (a.start.max(b.start)) + self.config.p;
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }

    /// Evaluate on a given element (x may lie on its closure).
    pub fn eval_on_element(&self, e: usize, x: T) -> BasisRow<T> {
        let p = self.config.p;
        let m = p + 1;
        let (xa, xb) = self.mesh.element(e);
        let h = xb - xa;
        let l0 = (xb - x) / h;
        let l1 = (x - xa) / h;
        let dl = T::one() / h;
        let [pa, pb] = &self.patches[e];
        let start = pa.start.min(pb.start);
        let end = pa.start.max(pb.start) + m;
        let width = end - start;
        let mut n = vec![T::zero(); width];
        let mut b = vec![T::zero(); width];
        let mut w = vec![T::zero(); m];
        let mut dw = vec![T::zero(); m];
        pa.eval(x, &mut w, &mut dw);
        for k in 0..m {
            let c = pa.start + k - start;
            n[c] += l0 * w[k];
            b[c] += l0 * dw[k] - dl * w[k];
        }
        pb.eval(x, &mut w, &mut dw);
        for k in 0..m {
            let c = pb.start + k - start;
            n[c] += l1 * w[k];
            b[c] += l1 * dw[k] + dl * w[k];
        }
        BasisRow { start, n, b }
    }

    /// Evaluate at any in-domain point.
    pub fn eval(&self, x: T) -> BasisRow<T> {
        self.eval_on_element(self.mesh.locate(x), x)
    }

    /// Interpolate a nodal vector at `x`.
    pub fn interpolate(&self, nodal: &[T], x: T) -> T {
        self.eval(x).dot(nodal)
    }
}

/// Basis values and derivatives at every quadrature point of a mesh.
#[derive(Debug, Clone)]
pub struct ShapeTable<T> {
    n_nodes: usize,
    points: Vec<T>,
    weights: Vec<T>,
    elements: Vec<usize>,
    rows: Vec<BasisRow<T>>,
    points_per_element: usize,
}

impl<T: Scalar> ShapeTable<T> {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn points_per_element(&self) -> usize {
        self.points_per_element
    }

    /// Global quadrature point coordinates.
    pub fn points(&self) -> &[T] {
        &self.points
    }

    /// Global quadrature weights (reference weights times the element Jacobian).
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn element_of(&self, q: usize) -> usize {
        self.elements[q]
    }

    pub fn row(&self, q: usize) -> &BasisRow<T> {
        &self.rows[q]
    }

    pub fn rows(&self) -> &[BasisRow<T>] {
        &self.rows
    }

    /// Dense N table (points x nodes).
    pub fn dense_n(&self) -> Vec<Vec<T>> {
        self.dense(|r| &r.n)
    }

    /// Dense derivative table (points x nodes).
    pub fn dense_b(&self) -> Vec<Vec<T>> {
        self.dense(|r| &r.b)
    }

    fn dense(&self, pick: impl Fn(&BasisRow<T>) -> &Vec<T>) -> Vec<Vec<T>> {
        self.rows
            .iter()
            .map(|r| {
                let mut full = vec![T::zero(); self.n_nodes];
                for (k, &v) in pick(r).iter().enumerate() {
                    full[r.start + k] = v;
                }
                full
            })
            .collect()
    }

    /// Interpolate a nodal vector at every quadrature point.
    pub fn interpolate(&self, nodal: &[T]) -> Vec<T> {
        self.rows.iter().map(|r| r.dot(nodal)).collect()
    }
}

/// Tabulate the basis at the quadrature points of every element.
pub fn eval_basis<T: Scalar>(basis: &Basis1D<T>, rule: &QuadratureRule<T>) -> Result<ShapeTable<T>> {
    let mesh = basis.mesh();
    let half = T::lit(0.5);
    let cap = mesh.n_elements() * rule.len();
    let mut points = Vec::with_capacity(cap);
    let mut weights = Vec::with_capacity(cap);
    let mut elements = Vec::with_capacity(cap);
    let mut rows = Vec::with_capacity(cap);
    for e in 0..mesh.n_elements() {
        let (xa, xb) = mesh.element(e);
        let jac = (xb - xa) * half;
        for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
            let x = (xa + xb) * half + jac * xi;
            points.push(x);
            weights.push(w * jac);
            elements.push(e);
            rows.push(basis.eval_on_element(e, x));
        }
    }
    Ok(ShapeTable {
        n_nodes: mesh.n_nodes(),
        points,
        weights,
        elements,
        rows,
        points_per_element: rule.len(),
    })
}

/// Default rule: `p + 2` points per element.
pub(crate) fn default_rule<T: Scalar>(p: usize) -> Result<QuadratureRule<T>> {
    gauss_rule(p + 2)
}
