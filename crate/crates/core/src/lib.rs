//! Formal and sectorial invariants of mild linear difference systems at infinity.
//!
//! Systems are written `y(s) = A(s)·y(s+1)` with `A` a matrix of (Puiseux)
//! series in `t = 1/s`. The crate covers series arithmetic, exponents and
//! their order relations, formal reduction to elementary models, numeric
//! sectorial flat sections, the splitting operator, and Stokes cocycle data.
//!
//! Everything here is `no_std` with `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diffmod;
pub mod exponents;
pub mod linalg;
pub mod quadrature;
pub mod sectorial;
pub mod series;
pub mod special;
pub mod stokes;

pub use num_complex::Complex64;

pub use diffmod::{DiffSystem, FormalDatum, FormalPiece};
pub use exponents::{Arc, Exponent, GrowthClass};
pub use series::{MatrixSeries, Series};
