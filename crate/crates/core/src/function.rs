//! Closed-form univariate factors and separable sums of their products.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TapsError};
use crate::scalar::Scalar;

/// Building block of a univariate factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive<T> {
    /// `x^power`
    Monomial { power: u32 },
    /// `sin(omega x + phase)`
    Sin {
        omega: T,
        #[serde(default)]
        phase: T,
    },
    /// `cos(omega x + phase)`
    Cos {
        omega: T,
        #[serde(default)]
        phase: T,
    },
    /// `exp(rate x)`
    Exp { rate: T },
    /// `exp(-((x - center) / width)^2)`
    Gaussian { center: T, width: T },
    /// 1 on `[lo, hi]`, 0 elsewhere. Its derivative is taken as zero.
    Indicator { lo: T, hi: T },
}

impl<T: Scalar> Primitive<T> {
    pub fn eval(&self, x: T) -> T {
        match *self {
            Primitive::Monomial { power } => x.powi(power as i32),
            Primitive::Sin { omega, phase } => (omega * x + phase).sin(),
            Primitive::Cos { omega, phase } => (omega * x + phase).cos(),
            Primitive::Exp { rate } => (rate * x).exp(),
            Primitive::Gaussian { center, width } => {
                let z = (x - center) / width;
                (-(z * z)).exp()
            }
            Primitive::Indicator { lo, hi } => {
                if x >= lo && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Derivative as a sum of scaled products of primitives.
    fn derivative(&self) -> Vec<(T, Vec<Primitive<T>>)> {
        match *self {
            Primitive::Monomial { power: 0 } => vec![],
            Primitive::Monomial { power } => {
                vec![(T::from_u32(power).unwrap(), vec![Primitive::Monomial { power: power - 1 }])]
            }
            Primitive::Sin { omega, phase } => vec![(omega, vec![Primitive::Cos { omega, phase }])],
            Primitive::Cos { omega, phase } => vec![(-omega, vec![Primitive::Sin { omega, phase }])],
            Primitive::Exp { rate } => vec![(rate, vec![self.clone()])],
            Primitive::Gaussian { center, width } => {
                let k = T::lit(2.0) / (width * width);
                let mut out = vec![(-k, vec![Primitive::Monomial { power: 1 }, self.clone()])];
                if center != T::zero() {
                    out.push((k * center, vec![self.clone()]));
                }
                out
            }
            Primitive::Indicator { .. } => vec![],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Primitive::Monomial { .. } => true,
            Primitive::Sin { omega, phase } | Primitive::Cos { omega, phase } => omega.is_finite() && phase.is_finite(),
            Primitive::Exp { rate } => rate.is_finite(),
            Primitive::Gaussian { center, width } => center.is_finite() && width.is_finite() && width > T::zero(),
            Primitive::Indicator { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
        };
        if ok {
            Ok(())
        } else {
            Err(TapsError::InvalidProblem(format!("invalid factor parameters: {self:?}")))
        }
    }
}

/// Product of primitives; the empty product is the constant 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FactorRepr<T>", into = "Vec<Primitive<T>>", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Factor<T> {
    parts: Vec<Primitive<T>>,
}

#[derive(Deserialize)]
#[serde(untagged, bound(deserialize = "T: Scalar"))]
enum FactorRepr<T> {
    One(Primitive<T>),
    Many(Vec<Primitive<T>>),
}

impl<T: Scalar> From<FactorRepr<T>> for Factor<T> {
    fn from(r: FactorRepr<T>) -> Self {
        match r {
            FactorRepr::One(p) => Factor::from_parts(vec![p]),
            FactorRepr::Many(v) => Factor::from_parts(v),
        }
    }
}

impl<T: Scalar> From<Factor<T>> for Vec<Primitive<T>> {
    fn from(f: Factor<T>) -> Self {
        f.parts
    }
}

impl<T: Scalar> From<Primitive<T>> for Factor<T> {
    fn from(p: Primitive<T>) -> Self {
        Factor::from_parts(vec![p])
    }
}

impl<T: Scalar> Factor<T> {
    pub fn one() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn from_parts(parts: Vec<Primitive<T>>) -> Self {
        let mut f = Self { parts };
        f.normalize();
        f
    }

    pub fn monomial(power: u32) -> Self {
        Primitive::Monomial { power }.into()
    }

    pub fn sin(omega: T) -> Self {
        Primitive::Sin { omega, phase: T::zero() }.into()
    }

    pub fn cos(omega: T) -> Self {
        Primitive::Cos { omega, phase: T::zero() }.into()
    }

    pub fn exp(rate: T) -> Self {
        Primitive::Exp { rate }.into()
    }

    pub fn gaussian(center: T, width: T) -> Self {
        Primitive::Gaussian { center, width }.into()
    }

    pub fn indicator(lo: T, hi: T) -> Self {
        Primitive::Indicator { lo, hi }.into()
    }

    pub fn parts(&self) -> &[Primitive<T>] {
        &self.parts
    }

    pub fn is_one(&self) -> bool {
        self.parts.is_empty()
    }

    fn normalize(&mut self) {
        let mut power = 0u32;
        let mut rate = T::zero();
        let mut has_exp = false;
        let mut rest = Vec::with_capacity(self.parts.len());
        for p in self.parts.drain(..) {
            match p {
                Primitive::Monomial { power: k } => power += k,
                Primitive::Exp { rate: r } => {
                    has_exp = true;
                    rate += r;
                }
                other => rest.push(other),
            }
        }
        if power > 0 {
            self.parts.push(Primitive::Monomial { power });
        }
        if has_exp && rate != T::zero() {
            self.parts.push(Primitive::Exp { rate });
        }
        self.parts.extend(rest);
    }

    pub fn eval(&self, x: T) -> T {
        self.parts.iter().map(|p| p.eval(x)).product()
    }

    pub fn mul(&self, other: &Factor<T>) -> Factor<T> {
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        Factor::from_parts(parts)
    }

    /// First derivative as a sum `Σ c_i g_i` (indicator jumps are dropped).
    pub fn derivative(&self) -> Vec<(T, Factor<T>)> {
        let mut out = Vec::new();
        for (i, p) in self.parts.iter().enumerate() {
            for (c, dp) in p.derivative() {
                let mut parts = dp;
                parts.extend(self.parts.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| q.clone()));
                out.push((c, Factor::from_parts(parts)));
            }
        }
        out
    }

    /// k-th derivative as a sum of scaled factors.
    pub fn nth_derivative(&self, k: usize) -> Vec<(T, Factor<T>)> {
        let mut cur = vec![(T::one(), self.clone())];
        for _ in 0..k {
            cur = cur
                .into_iter()
                .flat_map(|(c, f)| f.derivative().into_iter().map(move |(d, g)| (c * d, g)))
                .collect();
        }
        cur
    }

    /// Evaluate a derivative sum at `x`.
    pub fn eval_derivative(&self, k: usize, x: T) -> T {
        self.nth_derivative(k).iter().map(|(c, f)| *c * f.eval(x)).sum()
    }

    /// Locations where an indicator part jumps.
    pub fn jumps(&self) -> Vec<T> {
        self.parts
            .iter()
            .filter_map(|p| match *p {
                Primitive::Indicator { lo, hi } => Some([lo, hi]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.parts.iter().try_for_each(|p| p.validate())
    }
}

/// `coefficient * Π_d factor_d(x_d)`; dimensions without a factor contribute 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SeparableTerm<T> {
    pub coefficient: T,
    #[serde(default)]
    pub factors: BTreeMap<String, Factor<T>>,
}

impl<T: Scalar> SeparableTerm<T> {
    pub fn new(coefficient: T) -> Self {
        Self { coefficient, factors: BTreeMap::new() }
    }

    pub fn with(mut self, dim: impl Into<String>, factor: Factor<T>) -> Self {
        let dim = dim.into();
        let f = match self.factors.remove(&dim) {
            Some(old) => old.mul(&factor),
            None => factor,
        };
        if !f.is_one() {
            self.factors.insert(dim, f);
        }
        self
    }

    pub fn factor(&self, dim: &str) -> Factor<T> {
        self.factors.get(dim).cloned().unwrap_or_else(Factor::one)
    }

    pub fn eval(&self, point: &BTreeMap<String, T>) -> Result<T> {
        let mut v = self.coefficient;
        for (dim, f) in &self.factors {
            let x = point
                .get(dim)
                .ok_or_else(|| TapsError::DimensionMismatch(format!("no coordinate for `{dim}`")))?;
            v *= f.eval(*x);
        }
        Ok(v)
    }

    pub fn mul(&self, other: &SeparableTerm<T>) -> SeparableTerm<T> {
        let mut out = SeparableTerm::new(self.coefficient * other.coefficient);
        out.factors = self.factors.clone();
        for (d, f) in &other.factors {
            out = out.with(d.clone(), f.clone());
        }
        out
    }
}

/// Sum of separable terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SeparableFunction<T> {
    pub terms: Vec<SeparableTerm<T>>,
}

impl<T: Scalar> SeparableFunction<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn from_terms(terms: Vec<SeparableTerm<T>>) -> Self {
        Self { terms }
    }

    pub fn single(term: SeparableTerm<T>) -> Self {
        Self { terms: vec![term] }
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn dims(&self) -> BTreeSet<String> {
        self.terms.iter().flat_map(|t| t.factors.keys().cloned()).collect()
    }

    pub fn eval(&self, point: &BTreeMap<String, T>) -> Result<T> {
        self.terms.iter().map(|t| t.eval(point)).sum()
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(|t| t.coefficient *= s);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        out
    }

    /// Product of two sums (`R1 * R2` terms).
    pub fn mul(&self, other: &Self) -> Self {
        let terms = self
            .terms
            .iter()
            .flat_map(|a| other.terms.iter().map(move |b| a.mul(b)))
            .collect();
        Self { terms }
    }

    /// Substitute fixed values for some dimensions, folding them into the coefficients.
    pub fn fix_dimensions(&self, values: &BTreeMap<String, T>) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut out = SeparableTerm::new(t.coefficient);
                for (d, f) in &t.factors {
                    match values.get(d) {
                        Some(&x) => out.coefficient *= f.eval(x),
                        None => {
                            out.factors.insert(d.clone(), f.clone());
                        }
                    }
                }
                out
            })
            .collect();
        Self { terms }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if !t.coefficient.is_finite() {
                return Err(TapsError::NonFinite(format!("coefficient {}", t.coefficient)));
            }
            t.factors.values().try_for_each(|f| f.validate())?;
        }
        Ok(())
    }
}
