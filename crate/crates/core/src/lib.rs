//! Hybrid automata under standard and sphere (epsilon) semantics.
//!
//! The crate is organised as:
//!
//! - [`formula`]: first-order formulas over real polynomials, substitution, evaluation,
//!   s-expression / SMT-LIB / REDLOG text forms.
//! - [`geomsem`]: grid oracle for the standard and the sphere semantics of low-dimensional formulas.
//! - [`sphere_xlate`]: compositional translation of the sphere semantics into standard semantics.
//! - [`hybrid`]: hybrid automata, their transition relations, traces, disturbances and
//!   trace-level approximate simulation checks.
//! - [`models`]: the neural-oscillator family and the bouncing ball.
//! - [`sim`]: simulation with guard-crossing detection, return maps and attractor classification.
//! - [`reach`]: epsilon-reachability, reachability/convergence formula builders and
//!   quantifier-elimination backends.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod formula;
pub mod geomsem;
pub mod hybrid;
pub mod models;
pub mod reach;
pub mod sim;
pub mod sphere_xlate;

pub use error::{Error, Result};
