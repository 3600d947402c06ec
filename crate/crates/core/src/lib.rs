//! Moreau-Yosida penalization for backward stochastic variational
//! inequalities
//!
//! ```text
//! -dY + ∂phi(Y) dt ∋ F(t, Y, Z) dt - Z dB,   Y_T = η,
//! ```
//!
//! solved by least-squares Monte Carlo, with empirical checks of the a
//! priori estimates, stability bounds and convergence in ε.

pub mod cli;
pub mod config;
pub mod convex;
pub mod error;
pub mod estimates;
pub mod model;
pub mod oracle;
pub mod paths;
pub mod regression;
pub mod report;
pub mod solver;
pub mod rng;
pub mod schedule;
pub mod vecops;

pub use error::{Error, Result};
