mod common;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taps_core::assembly::{OperatorKind, UnivariateWeight};
use taps_core::function::{Factor, SeparableFunction, SeparableTerm};
use taps_core::problem::{apply_strong_form, manufacture, preset, ProblemSpec, WeakFormTerm, PRESET_NAMES};

type Point = BTreeMap<String, f64>;

fn eval(f: &SeparableFunction<f64>, p: &Point) -> f64 {
    f.eval(p).unwrap()
}

/// Central difference `∂_a ∂_b g` (or `∂_a g` when `b` is `None`).
fn fd(g: &SeparableFunction<f64>, p: &Point, a: &str, b: Option<&str>) -> f64 {
    let h = 1e-4;
    let shift = |p: &Point, d: &str, s: f64| {
        let mut q = p.clone();
        *q.get_mut(d).unwrap() += s;
        q
    };
    match b {
        None => (eval(g, &shift(p, a, h)) - eval(g, &shift(p, a, -h))) / (2.0 * h),
        Some(b) if a == b => (eval(g, &shift(p, a, h)) - 2.0 * eval(g, p) + eval(g, &shift(p, a, -h))) / (h * h),
        Some(b) => {
            let pp = shift(&shift(p, a, h), b, h);
            let pm = shift(&shift(p, a, h), b, -h);
            let mp = shift(&shift(p, a, -h), b, h);
            let mm = shift(&shift(p, a, -h), b, -h);
            (eval(g, &pp) - eval(g, &pm) - eval(g, &mp) + eval(g, &mm)) / (4.0 * h * h)
        }
    }
}

fn random_point(spec: &ProblemSpec<f64>, rng: &mut ChaCha8Rng) -> Point {
    spec.dimensions
        .iter()
        .map(|d| {
            let pad = 0.05 * (d.hi - d.lo);
            (d.name.clone(), rng.random_range(d.lo + pad..d.hi - pad))
        })
        .collect()
}

#[test]
fn presets_have_expected_structure() {
    let heat = preset::<f64>("heat_1d_spt").unwrap();
    assert_eq!(heat.dimensions.iter().map(|d| d.name.as_str()).collect::<Vec<_>>(), ["x", "alpha", "t"]);
    assert_eq!((heat.fields.len(), heat.lhs.len()), (1, 2));
    assert_eq!(heat.lhs[0].operator("t"), OperatorKind::MixedNB);
    assert_eq!(heat.lhs[1].operator("alpha"), OperatorKind::WeightedMass(UnivariateWeight::Coordinate));

    let mag = preset::<f64>("magnetostatics_3d").unwrap();
    assert_eq!(mag.fields.len(), 3);
    assert!(mag.lhs.iter().all(WeakFormTerm::is_diagonal));
    assert_eq!(mag.lhs.len(), 9);

    let el = preset::<f64>("elasticity_3d").unwrap();
    assert_eq!(el.lhs.iter().filter(|t| !t.is_diagonal()).count(), 6);
    let decoupled = preset::<f64>("elasticity_3d(-1, 1)").unwrap();
    assert!(decoupled.lhs.iter().all(WeakFormTerm::is_diagonal));

    let nl = preset::<f64>("nonlinear_reaction_spt").unwrap();
    assert!(nl.is_nonlinear());
    assert_eq!(nl.fields[0].dims.len(), 5);

    let het = preset::<f64>("heterogeneous_diffusivity(2,2,2)").unwrap();
    assert_eq!(het.dimensions.len(), 3 + 8 + 1);
    assert_eq!(het.lhs.len(), 1 + 8 * 3);
    assert_eq!(het.sweep_order(&het.fields[0]).last().map(String::as_str), Some("t"));

    for name in ["poisson_1d", "heat_1d_spt", "magnetostatics_3d", "elasticity_3d", "nonlinear_reaction_spt", "heterogeneous_diffusivity(1,2,2)"] {
        let s = preset::<f64>(name).unwrap();
        assert!(s.validate().is_empty(), "{name}: {:?}", s.validate());
        let json = serde_json::to_string(&s).unwrap();
        let back: ProblemSpec<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
    assert_eq!(PRESET_NAMES.len(), 6);
    for bad in ["nope", "heat_1d_spt(1)", "heterogeneous_diffusivity(0,1,1)", "heterogeneous_diffusivity(1,1)"] {
        assert!(preset::<f64>(bad).is_err(), "{bad}");
    }
}

#[test]
fn validation_catches_broken_specs() {
    let base = preset::<f64>("heat_1d_spt").unwrap();
    let mut s = base.clone();
    s.fields[0].dims.push("y".into());
    assert!(s.validate().iter().any(|d| d.message.contains("unknown dimension `y`")));

    let mut s = base.clone();
    s.lhs.clear();
    assert!(s.validate().iter().any(|d| d.message.contains("coercive")));

    let mut s = base.clone();
    s.dimensions[0].n_elements = 0;
    assert!(!s.validate().is_empty());

    let mut s = base.clone();
    s.lhs.push(WeakFormTerm::new(1.0, "v"));
    assert!(s.validate().iter().any(|d| d.message.contains("unknown")));

    let mut s = base.clone();
    s.lhs[1].operators.insert(
        "x".into(),
        OperatorKind::WeightedMass(UnivariateWeight::PreviousSolutionMode { field: "u".into(), mode: 0 }),
    );
    assert!(!s.validate().is_empty());

    let mut s = base;
    s.solver.modes = 0;
    assert!(s.ensure_valid().is_err());
}

#[test]
fn heat_forcing_matches_finite_differences() {
    let spec = preset::<f64>("heat_1d_spt").unwrap();
    let exact = common::heat_exact();
    let f = &manufacture(&spec, &exact).unwrap().rhs["u"];
    let g = &exact["u"];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let p = random_point(&spec, &mut rng);
        let want = fd(g, &p, "t", None) - p["alpha"] * fd(g, &p, "x", Some("x"));
        assert!((eval(f, &p) - want).abs() < 1e-5, "{} vs {want}", eval(f, &p));
    }
    // e^{-t} alone is nonzero at t = 0, so it cannot be manufactured.
    let bad = common::single("u", SeparableTerm::new(1.0).with("x", common::sin_pi()).with("t", Factor::exp(-1.0)));
    assert!(manufacture(&spec, &bad).is_err());
    assert!(apply_strong_form(&spec, &bad).is_ok());
}

#[test]
fn poisson_quadratic_forcing_is_constant() {
    let spec = preset::<f64>("poisson_1d").unwrap();
    // x(1 - x) = x - x²
    let g = SeparableFunction::from_terms(vec![
        SeparableTerm::new(1.0).with("x", Factor::monomial(1)),
        SeparableTerm::new(-1.0).with("x", Factor::monomial(2)),
    ]);
    let f = &manufacture(&spec, &common::single_fn("u", g)).unwrap().rhs["u"];
    for x in [0.0, 0.25, 0.9] {
        let p: Point = [("x".to_string(), x)].into_iter().collect();
        assert!((eval(f, &p) - 2.0).abs() < 1e-14);
    }
}

#[test]
fn elasticity_forcing_matches_navier_lame() {
    for (lambda, mu) in [(1.0, 1.0), (2.0, 0.5), (-1.0, 1.0)] {
        let spec = preset::<f64>(&format!("elasticity_3d({lambda}, {mu})")).unwrap();
        let exact = common::vector_exact(["u", "v", "w"]);
        let rhs = manufacture(&spec, &exact).unwrap().rhs;
        let xyz = ["x", "y", "z"];
        let comps = ["u", "v", "w"];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let p = random_point(&spec, &mut rng);
            for (i, c) in comps.iter().enumerate() {
                let lap: f64 = xyz.iter().map(|d| fd(&exact[*c], &p, d, Some(d))).sum();
                let grad_div: f64 = comps.iter().zip(xyz).map(|(o, d)| fd(&exact[*o], &p, xyz[i], Some(d))).sum();
                let want = -(mu * lap + (lambda + mu) * grad_div);
                assert!((eval(&rhs[*c], &p) - want).abs() < 1e-5, "{c}");
            }
        }
    }
}

#[test]
fn nonlinear_forcing_includes_the_square() {
    let spec = preset::<f64>("nonlinear_reaction_spt").unwrap();
    let exact = common::nonlinear_exact();
    let f = &manufacture(&spec, &exact).unwrap().rhs["u"];
    let g = &exact["u"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let p = random_point(&spec, &mut rng);
        let lap: f64 = ["x", "y", "z"].iter().map(|d| fd(g, &p, d, Some(d))).sum();
        let u = eval(g, &p);
        let want = fd(g, &p, "t", None) - p["alpha"] * lap + u * u;
        assert!((eval(f, &p) - want).abs() < 1e-5);
    }
    // The quadratic term alone, checked exactly.
    let mut lin = spec.clone();
    lin.lhs.clear();
    let only_sq = apply_strong_form(&lin, &exact).unwrap();
    let p = random_point(&spec, &mut rng);
    assert!((eval(&only_sq["u"], &p) - eval(g, &p).powi(2)).abs() < 1e-12);
}

#[test]
fn zero_exact_solution_gives_zero_forcing() {
    let spec = preset::<f64>("heat_1d_spt").unwrap();
    let f = manufacture(&spec, &common::single_fn("u", SeparableFunction::zero())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_point(&spec, &mut rng);
    assert_eq!(eval(&f.rhs["u"], &p), 0.0);
    let unknown = common::single("v", SeparableTerm::new(1.0));
    assert!(manufacture(&spec, &unknown).is_err());
    let wrong_dim = common::single("u", SeparableTerm::new(1.0).with("y", Factor::one()));
    assert!(manufacture(&spec, &wrong_dim).is_err());
}
