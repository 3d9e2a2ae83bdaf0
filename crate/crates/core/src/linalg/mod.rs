//! Banded storage, banded LU and Kronecker-structured helpers.

mod band;
mod iterative;
mod kron;

pub use band::{BandLu, BandMatrix};
pub use iterative::{bicgstab, conjugate_gradient, IterativeOutcome, LinearOperator};
pub use kron::{kron_apply_full, kron_dense, kron_matvec, unvec, vec, KronSum};
