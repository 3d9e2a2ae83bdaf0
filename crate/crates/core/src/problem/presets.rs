use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::assembly::{OperatorKind, UnivariateWeight};
use crate::error::{Result, TapsError};
use crate::function::Factor;
use crate::grid::{BoundaryNode, DimensionSpec, Role};
use crate::scalar::Scalar;

use super::{forcing, FieldSpec, NonlinearKind, NonlinearTerm, ProblemSpec, SolverParams, WeakFormTerm};

pub const PRESET_NAMES: &[&str] = &[
    "poisson_1d",
    "heat_1d_spt",
    "magnetostatics_3d",
    "elasticity_3d",
    "nonlinear_reaction_spt",
    "heterogeneous_diffusivity(Dx,Dy,Dz)",
];

/// Named built-in problems. `elasticity_3d` optionally takes `(lambda, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetName {
    Poisson1d,
    Heat1dSpt,
    Magnetostatics3d,
    Elasticity3d { lambda: f64, mu: f64 },
    NonlinearReactionSpt,
    HeterogeneousDiffusivity { dx: usize, dy: usize, dz: usize },
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PresetName::Poisson1d => write!(f, "poisson_1d"),
            PresetName::Heat1dSpt => write!(f, "heat_1d_spt"),
            PresetName::Magnetostatics3d => write!(f, "magnetostatics_3d"),
            PresetName::Elasticity3d { lambda, mu } => write!(f, "elasticity_3d({lambda},{mu})"),
            PresetName::NonlinearReactionSpt => write!(f, "nonlinear_reaction_spt"),
            PresetName::HeterogeneousDiffusivity { dx, dy, dz } => write!(f, "heterogeneous_diffusivity({dx},{dy},{dz})"),
        }
    }
}

fn args(s: &str) -> Result<(&str, Vec<&str>)> {
    match s.find('(') {
        None => Ok((s, vec![])),
        Some(i) => {
            let inner = s[i + 1..]
                .strip_suffix(')')
                .ok_or_else(|| TapsError::UnknownPreset(s.to_string()))?;
            Ok((&s[..i], inner.split(',').map(str::trim).filter(|a| !a.is_empty()).collect()))
        }
    }
}

impl FromStr for PresetName {
    type Err = TapsError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, a) = args(s)?;
        let bad = || TapsError::UnknownPreset(s.to_string());
        let none = |p: PresetName| if a.is_empty() { Ok(p) } else { Err(bad()) };
        match head {
            "poisson_1d" => none(PresetName::Poisson1d),
            "heat_1d_spt" => none(PresetName::Heat1dSpt),
            "magnetostatics_3d" => none(PresetName::Magnetostatics3d),
            "nonlinear_reaction_spt" => none(PresetName::NonlinearReactionSpt),
            "elasticity_3d" => match a.as_slice() {
                [] => Ok(PresetName::Elasticity3d { lambda: 1.0, mu: 1.0 }),
                [l, m] => Ok(PresetName::Elasticity3d {
                    lambda: l.parse().map_err(|_| bad())?,
                    mu: m.parse().map_err(|_| bad())?,
                }),
                _ => Err(bad()),
            },
            "heterogeneous_diffusivity" => {
                let n: Vec<usize> = a.iter().map(|x| x.parse().map_err(|_| bad())).collect::<Result<_>>()?;
                match n.as_slice() {
                    [dx, dy, dz] if *dx >= 1 && *dy >= 1 && *dz >= 1 => {
                        Ok(PresetName::HeterogeneousDiffusivity { dx: *dx, dy: *dy, dz: *dz })
                    }
                    [_, _, _] => Err(TapsError::InvalidProblem(format!("subdomain counts must be positive in `{s}`"))),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

const N_DEFAULT: usize = 8;

fn both_ends<T: Scalar>(d: DimensionSpec<T>) -> DimensionSpec<T> {
    d.with_dirichlet(&[BoundaryNode::LO, BoundaryNode::HI])
}

fn spatial<T: Scalar>(name: &str) -> DimensionSpec<T> {
    both_ends(DimensionSpec::new(name, Role::Spatial, T::zero(), T::one(), N_DEFAULT))
}

fn time<T: Scalar>() -> DimensionSpec<T> {
    DimensionSpec::new("t", Role::Temporal, T::zero(), T::one(), N_DEFAULT).with_dirichlet(&[BoundaryNode::LO])
}

fn param<T: Scalar>(name: &str) -> DimensionSpec<T> {
    DimensionSpec::new(name, Role::Parametric, T::one(), T::lit(2.0), N_DEFAULT)
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn field(name: &str, dims: &[&str]) -> FieldSpec {
    FieldSpec { name: name.to_string(), dims: names(dims) }
}

/// Build a preset problem with 8 elements per dimension and linear basis.
pub fn preset<T: Scalar>(name: &str) -> Result<ProblemSpec<T>> {
    let p: PresetName = name.parse()?;
    let spec = match p {
        PresetName::Poisson1d => poisson_1d(),
        PresetName::Heat1dSpt => heat_1d_spt(),
        PresetName::Magnetostatics3d => magnetostatics_3d(),
        PresetName::Elasticity3d { lambda, mu } => elasticity_3d(T::lit(lambda), T::lit(mu)),
        PresetName::NonlinearReactionSpt => nonlinear_reaction_spt(),
        PresetName::HeterogeneousDiffusivity { dx, dy, dz } => heterogeneous_diffusivity(dx, dy, dz),
    };
    Ok(ProblemSpec { name: p.to_string(), ..spec })
}

fn base<T: Scalar>(dimensions: Vec<DimensionSpec<T>>, fields: Vec<FieldSpec>, lhs: Vec<WeakFormTerm<T>>) -> ProblemSpec<T> {
    ProblemSpec {
        name: String::new(),
        dimensions,
        fields,
        lhs,
        rhs: BTreeMap::new(),
        nonlinear: Vec::new(),
        solver: SolverParams::default(),
    }
}

/// `-u'' = f` on `[0, 1]`, `u(0) = u(1) = 0`.
fn poisson_1d<T: Scalar>() -> ProblemSpec<T> {
    let mut s = base(
        vec![spatial("x")],
        vec![field("u", &["x"])],
        vec![WeakFormTerm::new(T::one(), "u").with("x", OperatorKind::Stiffness)],
    );
    s.rhs.insert("u".into(), forcing(T::lit(2.0), &[]));
    s.solver.modes = 1;
    s
}

/// `u_t - (alpha u_x)_x = f` over `(x, alpha, t)`.
fn heat_1d_spt<T: Scalar>() -> ProblemSpec<T> {
    let mut s = base(
        vec![spatial("x"), param("alpha"), time()],
        vec![field("u", &["x", "alpha", "t"])],
        vec![
            WeakFormTerm::new(T::one(), "u").with("t", OperatorKind::MixedNB).labeled("time"),
            WeakFormTerm::new(T::one(), "u")
                .with("x", OperatorKind::Stiffness)
                .with("alpha", OperatorKind::WeightedMass(UnivariateWeight::Coordinate))
                .labeled("diffusion"),
        ],
    );
    s.rhs.insert("u".into(), forcing(T::one(), &[]));
    s
}

/// Vacuum permeability.
const MU_0: f64 = 4.0e-7 * PI;

/// `-ΔA_i = μ0 J_i` for the three components on the unit cube.
fn magnetostatics_3d<T: Scalar>() -> ProblemSpec<T> {
    let xyz = ["x", "y", "z"];
    let comps = ["A_x", "A_y", "A_z"];
    let mut lhs = Vec::new();
    for c in comps {
        for d in xyz {
            lhs.push(WeakFormTerm::new(T::one(), c).with(d, OperatorKind::Stiffness).labeled(format!("laplace_{d}")));
        }
    }
    let mut s = base(xyz.iter().map(|d| spatial(d)).collect(), comps.iter().map(|c| field(c, &xyz)).collect(), lhs);
    // Default current density: a smooth loop-like distribution.
    let sx = Factor::sin(T::lit(PI));
    let j = [T::one(), T::lit(-0.5), T::lit(0.25)];
    for (c, jc) in comps.iter().zip(j) {
        s.rhs.insert(c.to_string(), forcing(T::lit(MU_0) * jc, &[("x", sx.clone()), ("y", sx.clone()), ("z", sx.clone())]));
    }
    s.solver.modes = 4;
    s
}

/// Navier-Lamé equations `μΔu + (λ+μ)∇(∇·u) + f = 0` for `(u, v, w)`.
fn elasticity_3d<T: Scalar>(lambda: T, mu: T) -> ProblemSpec<T> {
    let xyz = ["x", "y", "z"];
    let comps = ["u", "v", "w"];
    let lm = lambda + mu;
    let mut lhs = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        for d in xyz {
            lhs.push(WeakFormTerm::new(mu, c).with(d, OperatorKind::Stiffness).labeled(format!("laplace_{d}")));
        }
        let own = xyz[i];
        lhs.push(WeakFormTerm::new(lm, c).with(own, OperatorKind::Stiffness).labeled("dilatation"));
        for (j, other) in comps.iter().enumerate() {
            if i == j {
                continue;
            }
            lhs.push(
                WeakFormTerm::coupling(lm, c, other)
                    .with(own, OperatorKind::MixedBN)
                    .with(xyz[j], OperatorKind::MixedNB)
                    .labeled("dilatation"),
            );
        }
    }
    lhs.retain(|t| t.coefficient != T::zero());
    let mut s = base(xyz.iter().map(|d| spatial(d)).collect(), comps.iter().map(|c| field(c, &xyz)).collect(), lhs);
    for (c, sign) in comps.iter().zip([1.0, -1.0, 0.5]) {
        s.rhs.insert(c.to_string(), forcing(T::lit(sign), &[]));
    }
    s.solver.modes = 4;
    s
}

/// `u_t - ∇·(alpha ∇u) + u² = f` over `(x, y, z, alpha, t)`.
fn nonlinear_reaction_spt<T: Scalar>() -> ProblemSpec<T> {
    let xyz = ["x", "y", "z"];
    let mut dims: Vec<DimensionSpec<T>> = xyz.iter().map(|d| spatial(d)).collect();
    dims.push(param("alpha"));
    dims.push(time());
    let mut lhs = vec![WeakFormTerm::new(T::one(), "u").with("t", OperatorKind::MixedNB).labeled("time")];
    for d in xyz {
        lhs.push(
            WeakFormTerm::new(T::one(), "u")
                .with(d, OperatorKind::Stiffness)
                .with("alpha", OperatorKind::WeightedMass(UnivariateWeight::Coordinate))
                .labeled("diffusion"),
        );
    }
    let mut s = base(dims, vec![field("u", &["x", "y", "z", "alpha", "t"])], lhs);
    s.nonlinear.push(NonlinearTerm { kind: NonlinearKind::QuadraticReaction, field: "u".into(), coefficient: T::one() });
    s.rhs.insert("u".into(), forcing(T::one(), &[]));
    s
}

/// Name of the parameter dimension for subdomain `r` (1-based).
pub fn alpha_dim(r: usize) -> String {
    format!("alpha_{r}")
}

/// `u_t - ∇·(k ∇u) = f` with `k = Σ_r alpha_r I_r` over a `dx x dy x dz` grid of subdomains.
fn heterogeneous_diffusivity<T: Scalar>(dx: usize, dy: usize, dz: usize) -> ProblemSpec<T> {
    let xyz = ["x", "y", "z"];
    let counts = [dx, dy, dz];
    let r_total = dx * dy * dz;
    let mut dims: Vec<DimensionSpec<T>> = xyz
        .iter()
        .zip(counts)
        .map(|(d, c)| {
            let mut s = spatial(d);
            s.n_elements = N_DEFAULT.div_ceil(c) * c;
            s
        })
        .collect();
    let alphas: Vec<String> = (1..=r_total).map(alpha_dim).collect();
    for a in &alphas {
        dims.push(param(a));
    }
    dims.push(time());
    let mut all: Vec<&str> = xyz.to_vec();
    all.extend(alphas.iter().map(String::as_str));
    all.push("t");
    let mut lhs = vec![WeakFormTerm::new(T::one(), "u").with("t", OperatorKind::MixedNB).labeled("time")];
    for r in 0..r_total {
        let idx = [r % dx, (r / dx) % dy, r / (dx * dy)];
        let ind: Vec<UnivariateWeight<T>> = (0..3)
            .map(|k| {
                let c = T::from_usize_lossy(counts[k]);
                UnivariateWeight::Indicator {
                    lo: T::from_usize_lossy(idx[k]) / c,
                    hi: T::from_usize_lossy(idx[k] + 1) / c,
                }
            })
            .collect();
        for k in 0..3 {
            let mut t = WeakFormTerm::new(T::one(), "u").labeled(format!("diffusion_{}", r + 1));
            for (j, d) in xyz.iter().enumerate() {
                let kind = if j == k {
                    OperatorKind::WeightedStiffness(ind[j].clone())
                } else {
                    OperatorKind::WeightedMass(ind[j].clone())
                };
                t = t.with(d, kind);
            }
            t = t.with(&alphas[r], OperatorKind::WeightedMass(UnivariateWeight::Coordinate));
            lhs.push(t);
        }
    }
    let mut s = base(dims, vec![field("u", &all)], lhs);
    let r = T::lit(0.25);
    s.rhs.insert("u".into(), forcing(T::one(), &[("x", Factor::gaussian(T::zero(), r)), ("z", Factor::gaussian(T::zero(), r))]));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in [
            "poisson_1d",
            "heat_1d_spt",
            "magnetostatics_3d",
            "elasticity_3d",
            "elasticity_3d(2.0, 0.5)",
            "nonlinear_reaction_spt",
            "heterogeneous_diffusivity(2,2,2)",
            "heterogeneous_diffusivity(1,2,2)",
        ] {
            let s = preset::<f64>(name).unwrap();
            assert!(s.validate().is_empty(), "{name}: {:?}", s.validate());
        }
    }

    #[test]
    fn heat_structure() {
        let s = preset::<f64>("heat_1d_spt").unwrap();
        assert_eq!(s.dimensions.len(), 3);
        assert_eq!(s.fields.len(), 1);
        assert_eq!(s.lhs.len(), 2);
        assert_eq!(s.lhs[0].operator("t"), OperatorKind::MixedNB);
        assert_eq!(s.lhs[0].operator("x"), OperatorKind::Mass);
        assert_eq!(s.lhs[1].operator("alpha"), OperatorKind::WeightedMass(UnivariateWeight::Coordinate));
    }

    #[test]
    fn heterogeneous_structure() {
        let s = preset::<f64>("heterogeneous_diffusivity(2,2,2)").unwrap();
        assert_eq!(s.dimensions.len(), 12);
        let groups: std::collections::BTreeSet<_> = s.lhs.iter().map(|t| t.label.clone()).collect();
        assert_eq!(groups.len(), 9);
        assert!(matches!(preset::<f64>("heterogeneous_diffusivity(0,2,2)"), Err(TapsError::InvalidProblem(_))));
    }

    #[test]
    fn elasticity_structure() {
        let s = preset::<f64>("elasticity_3d").unwrap();
        assert_eq!(s.fields.len(), 3);
        assert_eq!(s.lhs.iter().filter(|t| !t.is_diagonal()).count(), 6);
        let d = preset::<f64>("elasticity_3d(-1,1)").unwrap();
        assert_eq!(d.lhs.iter().filter(|t| !t.is_diagonal()).count(), 0);
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(preset::<f64>("heat_2d"), Err(TapsError::UnknownPreset(_))));
        assert!(matches!(preset::<f64>("heat_1d_spt(3)"), Err(TapsError::UnknownPreset(_))));
    }
}
