//! Simulation of analog in-memory computing cores built from phase-change memory,
//! with iterative and gradient-descent weight programming, MVM characterization,
//! drift and sparsity experiments, and a small inference demo.

pub mod characterization;
pub mod cli;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod lstsq;
pub mod programming;
pub mod rng;
pub mod snapshot;

pub use error::{Error, Result};
