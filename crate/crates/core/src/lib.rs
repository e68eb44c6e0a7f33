//! Quenched diffusion in random environments.
//!
//! Building blocks for desk-scale experiments on stochastic homogenization:
//! multiscale schedules, random environments with finite-range dependence,
//! exit-time Monte Carlo, closed-form Brownian quantities, renormalization
//! observables, empirical couplings and the homogenization-rate study.

pub mod analytic;
pub mod config;
pub mod coupling;
pub mod domain;
pub mod environ;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod rng;
pub mod registry;
pub mod renorm;
pub mod schedule;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
