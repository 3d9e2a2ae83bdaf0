#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use taps_core::function::{Factor, Primitive, SeparableFunction, SeparableTerm};

pub fn sin_pi() -> Factor<f64> {
    Factor::sin(PI)
}

/// `t e^{-t}`: zero at the initial time.
pub fn t_exp() -> Factor<f64> {
    Factor::from_parts(vec![Primitive::Monomial { power: 1 }, Primitive::Exp { rate: -1.0 }])
}

pub fn single(field: &str, term: SeparableTerm<f64>) -> BTreeMap<String, SeparableFunction<f64>> {
    let mut m = BTreeMap::new();
    m.insert(field.to_string(), SeparableFunction::single(term));
    m
}

pub fn poisson_exact() -> BTreeMap<String, SeparableFunction<f64>> {
    single("u", SeparableTerm::new(1.0).with("x", sin_pi()))
}

pub fn heat_exact() -> BTreeMap<String, SeparableFunction<f64>> {
    single("u", SeparableTerm::new(1.0).with("x", sin_pi()).with("t", t_exp()))
}

pub fn sss(coefficient: f64) -> SeparableFunction<f64> {
    SeparableFunction::single(SeparableTerm::new(coefficient).with("x", sin_pi()).with("y", sin_pi()).with("z", sin_pi()))
}

pub fn vector_exact(fields: [&str; 3]) -> BTreeMap<String, SeparableFunction<f64>> {
    fields.iter().zip([1.0, -0.5, 0.25]).map(|(f, c)| (f.to_string(), sss(c))).collect()
}

pub fn nonlinear_exact() -> BTreeMap<String, SeparableFunction<f64>> {
    single("u", SeparableTerm::new(1.0).with("x", sin_pi()).with("y", sin_pi()).with("z", sin_pi()).with("t", t_exp()))
}

/// Dense LU solve through nalgebra, independent of the crate's banded solver.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let x = m.lu().solve(&nalgebra::DVector::from_column_slice(b)).expect("nonsingular");
    x.iter().copied().collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn single_fn(field: &str, f: SeparableFunction<f64>) -> BTreeMap<String, SeparableFunction<f64>> {
    let mut m = BTreeMap::new();
    m.insert(field.to_string(), f);
    m
}
