//! Numerical laboratory for the free Schrödinger equation `i u_t + Δu = 0`.
//!
//! Spectral propagation on truncated boxes, observability and unique-continuation
//! inequality evaluators, explicit counterexample families and impulse control
//! synthesis through a penalised quadratic dual.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod counterexamples;
pub mod error;
pub mod field;
pub mod inequalities;
pub mod linalg;
pub mod transform;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
