use crate::error::{Result, TapsError};
use crate::scalar::Scalar;

/// Gauss-Legendre points and weights on the reference element [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.points.len() - 1
    }
}

/// Legendre polynomial P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

pub fn gauss_rule<T: Scalar>(points_per_element: usize) -> Result<QuadratureRule<T>> {
    let n = points_per_element;
    if !(1..=32).contains(&n) {
        return Err(TapsError::QuadratureOrder(n));
    }
    let mut pts = vec![0.0f64; n];
    let mut wts = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Newton from the Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        pts[i] = -x;
        pts[n - 1 - i] = x;
        wts[i] = w;
        wts[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, dp) = legendre(n, 0.0);
        pts[n / 2] = 0.0;
        wts[n / 2] = 2.0 / (dp * dp);
    }
    Ok(QuadratureRule {
        points: pts.into_iter().map(T::lit).collect(),
        weights: wts.into_iter().map(T::lit).collect(),
    })
}
