//! Decumulation engine for an individual tontine account with a money-back
//! guarantee overlay.
//!
//! The crate is organised bottom-up:
//!
//! - [`mortality`]: life tables, Lee-Carter and Cairns-Blake-Dowd calibration
//!   and projection, pathwise one-year death probabilities.
//! - [`market`]: Kou jump-diffusion and stationary block bootstrap path
//!   generation, the shared [`market::PathSet`].
//! - [`tontine`]: the per-period account recursion and pool-level credit
//!   machinery.
//! - [`policy`]: withdrawal and allocation networks with exact gradients.
//! - [`train`]: the empirical EW-CVaR objective, Adam training and frontier
//!   sweeps.
//! - [`eval`]: risk estimators, rollouts, constant-weight benchmarks and
//!   heatmap exports.
//! - [`mbg`]: Monte Carlo pricing of the money-back guarantee.

pub mod error;
pub mod eval;
pub mod market;
pub mod mbg;
pub mod mortality;
pub mod policy;
pub mod rng;
pub mod tontine;
pub mod train;

pub use error::{Error, Result};
