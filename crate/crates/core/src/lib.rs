//! Numerical laboratory for multi-center vector-field multipliers of
//! Schrödinger operators `H = −Δ + V` on boxes in ℝⁿ, `n ≥ 3`.

pub mod cancellation;
pub mod certify;
pub mod commutator;
pub mod error;
pub mod evolution;
pub mod frequency;
pub mod grid;
pub mod multiplier;
pub mod potentials;
pub mod profile;
pub mod quadrature;
pub mod vector;

pub use error::{Error, Result};
