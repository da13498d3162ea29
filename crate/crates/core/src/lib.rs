//! Robust finite-time stability (FTS) certificates for nonlinear
//! fractional-order systems with time-varying delay,
//!
//! ```text
//! D^β x(t) = A0 x(t) + A1 x(t - g(t)) + A2 d(t) + f(t, x(t), x(t - g(t)), d(t)),
//! ```
//!
//! with a Caputo derivative of order `0 < β ≤ 1`.
//!
//! The crate computes the sufficient-condition bound `C(ε1, ρ)` and its
//! relaxation `D(ε1, ρ)`, and cross-checks them two ways: by direct
//! predictor-corrector simulation ([`simulator`]) and by running the
//! weighted-metric Picard iteration that underlies the bound
//! ([`fixedpoint`]).

pub mod certificate;
pub mod config;
pub mod error;
pub mod fixedpoint;
pub mod quadrature;
pub mod simulator;
pub mod specfun;
pub mod system;

pub use certificate::{Certificate, Status};
pub use error::{Error, Result};
pub use system::{EtaChoice, FtsQuery, SystemSpec};
