//! Solver and measurement harness for parabolic equations whose weight
//! `ρ_ε^a(y) = (ε² + y²)^{a/2}` degenerates or explodes on the hyperplane
//! `{y = 0}`, with conormal boundary conditions imposed weakly.
//!
//! The crate couples a lowest-order tensor-product finite element solver
//! (exact weighted quadrature toward the hyperplane, θ-scheme in time) with
//! the measurements the regularity theory asserts: energy and Caccioppoli
//! inequalities, De Giorgi truncation ledgers, L∞ bounds, parabolic Hölder
//! seminorms and their ε-stability, conjugate-weight duality, the explicit
//! polynomial-growth solution family, and flattening of curved
//! characteristic manifolds.

pub mod curved;
pub mod degiorgi;
pub mod domain;
pub mod error;
pub mod evolve;
pub mod linalg;
pub mod liouville;
pub mod norms;
pub mod operator;
pub mod quad;
pub mod regularize;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
