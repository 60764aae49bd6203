//! Utility-based shortfall risk (UBSR) estimation and optimization.
//!
//! The shortfall risk of a random payoff `X` under an increasing loss `l`
//! and tolerance `lambda` is the smallest cash amount `t` with
//! `E[l(-X - t)] <= lambda`. This crate provides:
//!
//! - [`loss`]: the built-in loss families and their regularity constants;
//! - [`models`]: Gaussian sampling models and closed-form UBSR oracles;
//! - [`estimator`]: the sample-average shortfall function and the
//!   search-and-bisect root finder, plus a 1-D Wasserstein utility;
//! - [`gradient`]: the two-batch ratio estimator for the UBSR gradient;
//! - [`optimizer`]: projected stochastic gradient over a box;
//! - [`config`] and [`studies`]: the flat config format and the
//!   Monte-Carlo study harnesses behind the `srisk` CLI.

pub mod config;
pub mod error;
pub mod estimator;
pub mod gradient;
pub mod loss;
pub mod models;
pub mod optimizer;
pub mod studies;

pub use error::{Error, Result};
