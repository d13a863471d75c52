//! Perturbations of selfadjoint regular operators and sums `S ± iT`.

pub mod perturbation;
pub mod sums;

pub use perturbation::*;
pub use sums::*;
