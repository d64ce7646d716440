//! Optimal entry time and habit-formation consumption under a partially
//! observed Ornstein-Uhlenbeck drift.
//!
//! An investor pays an information cost `κ` per unit time to watch the
//! drift `μ_t` directly. At a stopping time `τ` they stop paying, start
//! investing and consuming from wealth `x0 − κτ`, and from then on only
//! observe stock prices, filtering the drift with a Kalman-Bucy filter.
//!
//! * [`params`]: model constants and admissibility checks.
//! * [`filtering`]: the filter variance (Riccati) and filter updates.
//! * [`interior`]: the closed-form value and policies after entry.
//! * [`vi`]: the entry problem as an obstacle problem in `(t, η)`, solved by
//!   projected SOR, with free-boundary extraction.
//! * [`simulation`]: Monte Carlo verification of all of the above.
//! * [`report`] and [`checks`]: CSV/JSON output and residual suites used by
//!   the command-line tool.

// `!(x > 0.0)` is used deliberately so NaN takes the failure branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod error;
pub mod filtering;
pub mod interior;
pub mod ode;
pub mod params;
pub mod quadrature;
pub mod report;
pub mod simulation;
pub mod vi;

pub use error::{Error, Result};
pub use params::{validate, ModelConfig};
