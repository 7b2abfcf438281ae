//! Flow-level models of networks without congestion control.
//!
//! Sources send at their full access rate and losses at a saturated link are
//! proportional to the input rate (tail dropping). This crate computes the
//! resulting bandwidth allocation on acyclic networks, simulates the
//! flow-count Markov process and its scaled / quasi-stationary / saturated
//! variants, estimates the quasi-stationary throughput of the end-to-end
//! class on a linear network, integrates the associated fluid ODE systems,
//! and classifies stability of linear networks and upstream trees.

pub mod allocation;
pub mod ctmc;
pub mod error;
pub mod fluid;
pub mod quasistat;
pub mod rng;
pub mod stability;
pub mod sweep;
pub mod topology;

pub use error::{Error, Result};
