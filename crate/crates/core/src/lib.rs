//! Ionization profiles of an isolated autoionizing resonance driven by
//! intense, spectrally broadened pulses.
//!
//! Solvers: stochastic Monte Carlo over field trajectories
//! ([`propagator`]), ensemble-averaged equations under the decorrelation
//! approximation ([`decorrelated`]), their exact constant-intensity solution
//! ([`laplace`]) and the memory-free rate limit.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod decorrelated;
pub mod error;
pub mod laplace;
pub mod model;
pub mod observables;
pub mod ode;
pub mod propagator;
pub mod pulses;
pub mod stats;
pub mod stochastic;
pub mod units;

pub use error::{Error, Result};
