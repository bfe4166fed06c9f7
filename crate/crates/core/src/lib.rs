//! Pseudospectral solver and verification suite for quasilinear parabolic
//! equations `u_t = A(u, ∇u, …, ∇^{2p-1}u)·∇^{2p}u + b(…)` of order `2p` on
//! flat tori.
//!
//! The solve follows a constructive route: build the compatible time-jet of
//! the initial datum, solve the linear problem with coefficients frozen along
//! the jet polynomial, then correct with Newton iterations that use the exact
//! linearization of `u ↦ u_t − Q[u]`. The [`analysis`] module certifies the
//! inequalities behind that construction numerically.

pub mod analysis;
pub mod error;
pub mod expr;
pub mod harness;
pub mod jet;
pub mod linear;
pub mod operator;
pub mod quasilinear;
pub mod torus;

pub use error::{Error, Result};
