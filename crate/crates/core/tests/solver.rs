mod common;

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taps_core::assembly::{OperatorKind, SpaceSet};
use taps_core::function::Factor;
use taps_core::grid::{BoundaryNode, DimensionSpec, Role};
use taps_core::linalg::{BandMatrix, KronSum};
use taps_core::problem::{manufacture, preset, LinearSolver, ProblemSpec};
use taps_core::solver::{assemble_rhs, contract_coefficients, solve, solve_subspace, LoadTerm, OperatorTerm, Solver, SubspaceSystem};
use taps_core::td::{l2_distance, l2_norm, relative_l2_error, TdField};

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

fn random_band(rng: &mut ChaCha8Rng, n: usize, bw: usize) -> BandMatrix<f64> {
    let mut b = BandMatrix::zeros(n, bw, bw);
    for i in 0..n {
        for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
            b.set(i, j, rng.random_range(-1.0..1.0));
        }
    }
    b
}

fn heat(n: usize, m: usize) -> ProblemSpec<f64> {
    manufacture(&preset::<f64>("heat_1d_spt").unwrap(), &common::heat_exact()).unwrap().refined(n).with_modes(m)
}

#[test]
fn coefficient_contraction_matches_index_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sizes = [5usize, 4, 6];
    let (mu, mv) = (3, 2);
    let dims: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let u = TdField::new("u", dims.clone(), sizes.iter().map(|&n| random_matrix(&mut rng, n, mu)).collect()).unwrap();
    let v = TdField::new("v", dims, sizes.iter().map(|&n| random_matrix(&mut rng, n, mv)).collect()).unwrap();
    let ops: Vec<_> = sizes.iter().map(|&n| Arc::new(random_band(&mut rng, n, 1))).collect();
    let term = OperatorTerm { coefficient: 1.0, test: 0, trial: 1, ops: ops.clone(), label: "t".into() };
    let fields = [u, v];
    for target in 0..3 {
        let c = contract_coefficients(&term, &fields, target);
        for m in 0..mu {
            for n in 0..mv {
                let mut want = 1.0;
                for k in (0..3).filter(|&k| k != target) {
                    let mut s = 0.0;
                    for i in 0..sizes[k] {
                        for j in 0..sizes[k] {
                            s += fields[0].factors[k][[i, m]] * ops[k].get(i, j) * fields[1].factors[k][[j, n]];
                        }
                    }
                    want *= s;
                }
                assert!((c[[m, n]] - want).abs() < 1e-13 * (1.0 + want.abs()));
            }
        }
    }
    // A single dimension contracts to all ones.
    let one = TdField::new("w", vec!["a".into()], vec![random_matrix(&mut rng, 5, 1)]).unwrap();
    let t1 = OperatorTerm { coefficient: 1.0, test: 0, trial: 0, ops: vec![ops[0].clone()], label: "t".into() };
    assert_eq!(contract_coefficients(&t1, &[one], 0)[[0, 0]], 1.0);
}

#[test]
fn rhs_matches_tensor_quadrature() {
    let sp = SpaceSet::new(&[
        DimensionSpec::new("x", Role::Spatial, 0.0, 1.0, 4),
        DimensionSpec::new("y", Role::Parametric, 1.0, 2.0, 3),
        DimensionSpec::new("t", Role::Temporal, 0.0, 1.0, 5),
    ])
    .unwrap();
    let names = ["x", "y", "t"];
    let f = [Factor::sin(3.0), Factor::monomial(2), Factor::exp(-2.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let u = TdField::new(
        "u",
        names.iter().map(|s| s.to_string()).collect(),
        names.iter().map(|d| random_matrix(&mut rng, sp.get(d).unwrap().n_nodes(), 2)).collect(),
    )
    .unwrap();
    let loads = vec![LoadTerm { coefficient: 1.5, loads: names.iter().zip(&f).map(|(d, g)| sp.get(d).unwrap().load(g).unwrap()).collect() }];
    let tabs: Vec<_> = names.iter().map(|d| &sp.get(d).unwrap().table).collect();
    let bases: Vec<_> = names.iter().map(|d| &sp.get(d).unwrap().basis).collect();
    for target in 0..3 {
        let q = assemble_rhs(&loads, &u, target);
        let n = sp.get(names[target]).unwrap().n_nodes();
        let mut want = Array2::<f64>::zeros((n, 2));
        let (o1, o2) = match target {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for (qt, &xt) in tabs[target].points().iter().enumerate() {
            let wt = tabs[target].weights()[qt];
            let row = bases[target].eval(xt);
            for (&x1, &w1) in tabs[o1].points().iter().zip(tabs[o1].weights()) {
                for (&x2, &w2) in tabs[o2].points().iter().zip(tabs[o2].weights()) {
                    let fv = 1.5 * f[target].eval(xt) * f[o1].eval(x1) * f[o2].eval(x2);
                    for m in 0..2 {
                        let u1 = bases[o1].interpolate(&u.factors[o1].column(m).to_vec(), x1);
                        let u2 = bases[o2].interpolate(&u.factors[o2].column(m).to_vec(), x2);
                        for (k, &nk) in row.n.iter().enumerate() {
                            want[[row.start + k, m]] += wt * w1 * w2 * fv * nk * u1 * u2;
                        }
                    }
                }
            }
        }
        for (a, b) in q.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }
}

/// Dense `Σ C_t ⊗ K_t` on the free rows, in `vec` (column-major) order.
fn dense_system(sum: &KronSum<'_, f64>, n: usize, m: usize, free: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let idx: Vec<usize> = (0..m).flat_map(|a| free.iter().map(move |&i| a * n + i)).collect();
    let mut a = vec![vec![0.0; idx.len()]; idx.len()];
    for (r, &ri) in idx.iter().enumerate() {
        for (c, &cj) in idx.iter().enumerate() {
            for (cm, k) in &sum.terms {
                a[r][c] += cm[[ri / n, cj / n]] * k.get(ri % n, cj % n);
            }
        }
    }
    (a, idx)
}

#[test]
fn subspace_solve_matches_dense_kronecker() {
    let sp = SpaceSet::new(&[DimensionSpec::new("x", Role::Spatial, 0.0, 1.0, 6).with_dirichlet(&[BoundaryNode::LO, BoundaryNode::HI])]).unwrap();
    let s = sp.get("x").unwrap();
    let k1 = s.operator(&OperatorKind::Stiffness, None).unwrap();
    let k2 = s.operator(&OperatorKind::Mass, None).unwrap();
    let k3 = s.operator(&OperatorKind::MixedNB, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m) = (7, 3);
    for (symmetric, solver) in [
        (true, LinearSolver::DirectSparse),
        (false, LinearSolver::DirectSparse),
        (true, LinearSolver::ConjugateGradient { tol: 1e-13, max_iter: 500 }),
        (false, LinearSolver::ConjugateGradient { tol: 1e-13, max_iter: 500 }),
    ] {
        let g = random_matrix(&mut rng, m, m);
        let c1 = g.dot(&g.t()) + Array2::<f64>::eye(m);
        let c2 = random_matrix(&mut rng, m, m).mapv(|v| 0.1 * v);
        let c2 = if symmetric { &c2 + &c2.t() } else { c2 };
        let mut sum = KronSum::new();
        sum.push(c1, &k1);
        if symmetric {
            sum.push(c2, &k2);
        } else {
            sum.push(c2, &k3);
        }
        let rhs = random_matrix(&mut rng, n, m);
        let free = vec![1, 2, 3, 4, 5];
        let sys = SubspaceSystem { dim: "x".into(), sum, rhs: rhs.clone(), free: free.clone() };
        let u = solve_subspace(&sys, solver, 0).unwrap();
        let (a, idx) = dense_system(&sys.sum, n, m, &free);
        let b: Vec<f64> = idx.iter().map(|&i| rhs[[i % n, i / n]]).collect();
        let x = common::dense_solve(&a, &b);
        for (&i, &xi) in idx.iter().zip(&x) {
            assert!((u[[i % n, i / n]] - xi).abs() < 1e-9 * (1.0 + xi.abs()), "{symmetric} {solver:?}");
        }
        assert!(u.row(0).iter().chain(u.row(6).iter()).all(|&v| v == 0.0));
        assert!(sys.residual(&u) < 1e-9);
    }
}

#[test]
fn one_dimensional_problem_is_the_galerkin_solve() {
    for p in 1..=2 {
        let spec = manufacture(&preset::<f64>("poisson_1d").unwrap(), &common::poisson_exact())
            .unwrap()
            .refined(16)
            .with_basis(taps_core::grid::BasisConfig::new(p));
        let sol = solve(&spec).unwrap();
        let u = &sol.fields[0];
        assert_eq!(u.modes(), 1);
        let s = sol.spaces.get("x").unwrap();
        let k = s.operator(&OperatorKind::Stiffness, None).unwrap().to_dense();
        let f = s.load(&common::sin_pi()).unwrap();
        let free = s.index_map().free().to_vec();
        let a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| k[i][j]).collect()).collect();
        let b: Vec<f64> = free.iter().map(|&i| std::f64::consts::PI.powi(2) * f[i]).collect();
        let x = common::dense_solve(&a, &b);
        for (&i, &xi) in free.iter().zip(&x) {
            assert!((u.factors[0][[i, 0]] - xi).abs() < 1e-12, "p={p}");
        }
        assert!(sol.report.converged);
    }
}

#[test]
fn quadratic_is_reproduced_nodally() {
    let spec = preset::<f64>("poisson_1d").unwrap().refined(8);
    let sol = solve(&spec).unwrap();
    let nodes = sol.spaces.get("x").unwrap().basis.mesh().nodes().to_vec();
    for (i, x) in nodes.iter().enumerate() {
        assert!((sol.fields[0].factors[0][[i, 0]] - x * (1.0 - x)).abs() < 1e-13);
    }
}

#[test]
fn sweep_changes_decrease_early_on() {
    let spec = heat(6, 4);
    let solver = Solver::new(&spec).unwrap();
    let mut fields = solver.init().unwrap();
    let mut changes = Vec::new();
    for s in 0..5 {
        changes.push(solver.sweep(solver.terms(), &mut fields, s).unwrap());
    }
    for w in changes.windows(2) {
        assert!(w[1] <= w[0], "{changes:?}");
    }
}

#[test]
fn solution_is_linear_in_the_forcing() {
    let spec = heat(6, 3);
    let mut doubled = spec.clone();
    for g in doubled.rhs.values_mut() {
        *g = g.scaled(2.0);
    }
    let a = solve(&spec).unwrap();
    let b = solve(&doubled).unwrap();
    let two_a = a.fields[0].scaled(2.0);
    let d = l2_distance(&b.fields[0], &two_a, &a.spaces).unwrap();
    assert!(d / l2_norm(&two_a, &a.spaces).unwrap() < 1e-8);
}

#[test]
fn zero_forcing_gives_zero_field() {
    let mut spec = heat(6, 3);
    spec.rhs.clear();
    let sol = solve(&spec).unwrap();
    assert!(sol.fields[0].factors.iter().all(|u| u.iter().all(|&v| v == 0.0)));
    assert!(sol.report.converged);
}

#[test]
fn initialization_is_seeded() {
    let spec = heat(6, 3);
    let solver = Solver::new(&spec).unwrap();
    let a = solver.init().unwrap();
    assert_eq!(a, solver.init().unwrap());
    let mut other = spec.clone();
    other.solver.seed = 1;
    assert_ne!(a, Solver::new(&other).unwrap().init().unwrap());
    // Dirichlet rows start at zero: x at both ends, t at 0.
    let (ux, ut) = (&a[0].factors[0], &a[0].factors[2]);
    assert!(ux.row(0).iter().chain(ux.row(6).iter()).chain(ut.row(0).iter()).all(|&v| v == 0.0));
    let s1 = solve(&spec).unwrap();
    let s2 = solve(&spec).unwrap();
    assert_eq!(s1.fields, s2.fields);
}

#[test]
fn seeds_give_comparable_errors() {
    let errs: Vec<f64> = (0..3)
        .map(|seed| {
            let mut spec = heat(8, 3);
            spec.solver.seed = seed;
            let sol = solve(&spec).unwrap();
            relative_l2_error(&sol.fields[0], &common::heat_exact()["u"], &sol.spaces).unwrap()
        })
        .collect();
    let (lo, hi) = errs.iter().fold((f64::MAX, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    assert!(hi <= 10.0 * lo, "{errs:?}");
}

#[test]
fn converged_solution_is_stationary() {
    let sol = solve(&heat(8, 3)).unwrap();
    assert!(sol.report.converged);
    assert!(sol.report.max_residual() <= 1e-5, "{}", sol.report.max_residual());
    assert_eq!(sol.report.residuals.len(), 3);
}

#[test]
fn hitting_the_sweep_limit_is_reported() {
    let mut spec = heat(8, 3);
    spec.solver.max_sweeps = 1;
    let sol = solve(&spec).unwrap();
    assert!(!sol.report.converged);
    assert_eq!(sol.report.sweeps, 1);
}

#[test]
fn linear_problems_take_one_outer_iteration() {
    let sol = solve(&heat(6, 2)).unwrap();
    assert_eq!(sol.report.nonlinear_iterations, 1);
    assert!(sol.report.nonlinear_changes.is_empty());
}

#[test]
fn nonlinear_fixed_point_is_stable() {
    let spec = manufacture(&preset::<f64>("nonlinear_reaction_spt").unwrap(), &common::nonlinear_exact()).unwrap().refined(4).with_modes(2);
    let solver = Solver::new(&spec).unwrap();
    let sol = solver.solve().unwrap();
    assert!(sol.report.converged, "{:?}", sol.report);
    assert!(sol.report.nonlinear_iterations > 1 && sol.report.nonlinear_iterations <= 25);
    let (_, change, ok) = solver.fixed_point_step(&sol.fields).unwrap();
    assert!(ok && change <= spec.solver.tol_nonlinear, "{change}");
}

#[test]
fn single_precision_solve() {
    let spec64 = heat(8, 3);
    let spec: ProblemSpec<f32> = serde_json::from_str(&serde_json::to_string(&spec64).unwrap()).unwrap();
    let mut spec = spec;
    spec.solver.tol_subspace = 1e-4;
    let sol = solve(&spec).unwrap();
    let exact: taps_core::function::SeparableFunction<f32> = serde_json::from_str(&serde_json::to_string(&common::heat_exact()["u"]).unwrap()).unwrap();
    let e = relative_l2_error(&sol.fields[0], &exact, &sol.spaces).unwrap();
    assert!(e < 2e-2, "{e}");
}
