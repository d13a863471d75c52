//! Unbounded operators on Hilbert C*-modules over commutative algebras
//! `C(X)`, modelled by fields of finite-dimensional relations over a
//! discretized base space, together with local-global checks for
//! regularity and selfadjointness.

pub mod cstar_space;
pub mod error;
pub mod hilbert_module;
pub mod linalg;
pub mod localization;
pub mod perturbation_sums;
pub mod regularity;
pub mod scenario;
pub mod separation;
pub mod unbounded_ops;

pub use error::{Error, Result};
