//! Tensor-decomposition a priori surrogates: a separated-representation
//! Galerkin solver over space, parameter and time dimensions.

// `!(a > b)` is used on purpose so that NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod error;
pub mod function;
pub mod grid;
pub mod linalg;
pub mod mms;
pub mod oracle;
pub mod problem;
pub mod scalar;
pub mod solver;
pub mod td;

pub use error::{Result, TapsError};
pub use scalar::Scalar;

pub type ProblemSpecF64 = problem::ProblemSpec<f64>;
pub type ProblemSpecF32 = problem::ProblemSpec<f32>;
pub type TdFieldF64 = td::TdField<f64>;
pub type TdFieldF32 = td::TdField<f32>;
pub type SolutionF64 = solver::Solution<f64>;
pub type SolutionF32 = solver::Solution<f32>;
pub type SeparableFunctionF64 = function::SeparableFunction<f64>;
pub type SeparableFunctionF32 = function::SeparableFunction<f32>;
