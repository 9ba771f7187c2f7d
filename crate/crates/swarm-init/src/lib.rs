//! Design and validation of sequential satellite-release schedules under
//! chance-constrained inter-satellite distance limits.
//!
//! The library models a swarm deployed row by row from a single carrier:
//! drift-center dynamics with averaged oblateness effects, spin-modulated
//! drag increments, consensus contraction on an expanding interaction graph,
//! stage-wise mean/covariance propagation, a deterministic per-edge safety
//! test at a prescribed risk level, and a seeded Monte Carlo validator.

pub mod config;
pub mod deployment;
pub mod drag;
pub mod graph;
pub mod monte_carlo;
pub mod numerics;
pub mod orbit;
pub mod report;
pub mod safety;
pub mod stages;
