//! Scenario-based model predictive control for water reservoirs.
//!
//! The crate is organised the way the control loop is:
//!
//! - [`hydrology`]: reservoir state, mass balance, level/volume map, demand
//!   profiles, inflow ingestion and climatology.
//! - [`scenario`]: an additive trend + Fourier seasonality model fitted by
//!   regularised least squares, and Monte Carlo sampling of inflow scenarios.
//! - [`controller`]: scenario counts, the multi-scenario sum-of-norms MPC
//!   problem and its solver, and the receding-horizon driver.
//! - [`eval`]: a-posteriori nonlinear cost, run metrics, oracle-normalised
//!   Monte Carlo comparison and a synthetic dataset generator.
//!
//! All randomness derives from a single `u64` seed through [`rng`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod eval;
pub mod hydrology;
pub mod kv;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};

/// Seconds per simulation step.
pub const SECONDS_PER_STEP: f64 = 3600.0;
