//! Mixed-precision second-order optimization with computable accuracy limits.
//!
//! The crate simulates Newton-family minimizers (Newton, Inexact Newton,
//! Gauss-Newton, GN_k) under a precision policy (π_g, π_w, π_l): gradients,
//! curvature, and linear solves each run at their own floating-point tier,
//! with every scalar operation rounded at that tier. Alongside the optimizers
//! it computes the a-priori quantities that predict where such runs plateau
//! (ψ, lim_acc, lim_g) and the structured condition number κ_S of extended
//! normal equations, plus the CGLS_k solver for those systems.
//!
//! Entry points:
//! - [`models::Problem`] builds the objective families; [`optimize::newton_minimize`]
//!   and friends run them under a [`optimize::PrecisionPolicy`].
//! - [`analysis`] turns a problem and policy into a [`analysis::BoundReport`].
//! - [`experiment`] wires configs to full artifact bundles (traces, bounds,
//!   plots); the `mp-newton` binary exposes it as a CLI.
//!
//! The `examples/` directory has one runnable program per capability.

pub mod analysis;
pub mod data;
pub mod error;
pub mod linalg;
pub mod linsolve;
pub mod models;
pub mod optimize;
pub mod precision;

pub use error::MpError;
