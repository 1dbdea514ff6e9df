//! Finite-particle min-max Langevin dynamics for entropy-regularized
//! zero-sum games over ℝᵈ.
//!
//! The crate computes quantal response equilibria of
//! `min_{ρˣ} max_{ρʸ} E[V] − τH(ρˣ) + τH(ρʸ)` by simulating `N` interacting
//! particle pairs, and ships the closed-form Gaussian oracles and theory
//! envelopes needed to check the simulation quantitatively.
//!
//! Modules, bottom-up:
//!
//! - [`payoff`]: payoff families, analytic gradients, certified `(α, L)`.
//! - [`rng`]: counter-keyed Gaussian noise streams.
//! - [`deterministic`]: min-max gradient descent and the equilibrium point.
//! - [`dynamics`]: particle drift and the discrete-time update.
//! - [`oracle`]: Gaussian equilibria and bound calculators.
//! - [`metrics`]: Gaussian divergences and sample-based Wasserstein estimates.
//! - [`config`], [`experiment`], [`checks`], [`snapshot`]: the experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod deterministic;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod payoff;
pub mod rng;
pub mod snapshot;

pub use error::{Error, Result};
