//! Numerical workbench for semiclassical groundstates of the magnetic
//! nonlinear Schrödinger equation
//!
//! ```text
//! -ε² Δ_{A/ε²} u + V u = |u|^{p-2} u
//! ```
//!
//! in two dimensions: the limiting constant-coefficient problem, the
//! concentration function built from it, a penalized solver for spike
//! solutions, and the experiment harness tying them together.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod config;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod io;
pub mod limiting;
pub mod penalized;
pub mod potential;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{ComplexField, Grid2D, RealField, VectorPotentialField};
