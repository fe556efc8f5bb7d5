//! Online volatility forecasting with particle methods.
//!
//! The library implements a leverage stochastic-volatility state-space model
//! together with four online filtering algorithms (a SISR particle filter,
//! two Liu-West filters that learn parameters alongside states, and a
//! particle swarm built from posterior parameter draws), a particle-marginal
//! Metropolis-Hastings sampler for offline parameter estimation, and the
//! diagnostics and data plumbing needed to run the whole pipeline on price
//! series.

pub mod data;
pub mod diagnostics;
pub mod filters;
pub mod io;
pub mod math;
pub mod model;
pub mod pmmh;
pub mod seed;
pub mod ssm;
