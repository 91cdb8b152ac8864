//! Consecutive Brownian bridge diffusion for estimating a latent point that
//! sits between two known endpoints.
//!
//! The crate is organized bottom-up:
//!
//! - [`latent`], [`schedule`], [`rng`]: domain types, discretizations, seeded streams
//! - [`gaussian`]: exact Gaussian conditioning and moment tests (the oracle layer)
//! - [`bridge`]: forward marginals, closed-form backward steps, labels, weights
//! - [`ddpm`]: DDPM reference formulas and its variance bound
//! - [`denoiser`]: analytic oracles and a small MLP with Adam
//! - [`pipeline`]: training and two-chain sampling
//! - [`sde`]: the bridge SDE, its reverse and an Euler–Maruyama integrator
//! - [`harness`]: synthetic tasks, configs, reports and verification suites

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod ddpm;
pub mod denoiser;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod latent;
pub mod pipeline;
pub mod rng;
pub mod schedule;
pub mod sde;

pub use error::{Error, Result};
pub use latent::{BridgeSide, LatentPoint, Triplet};
pub use schedule::{BridgeSchedule, DdpmSchedule};
