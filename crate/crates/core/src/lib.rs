//! Deterministic simulation of dynamic high-capacity ride-pooling on road
//! networks, together with the system-load analytics used to validate the
//! occupancy and service-rate scaling laws against simulated sweeps.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] – road graphs, shortest paths, distance caches, grid generator
//! * [`demand`] – trip ingestion/filtering, subsampling, Poisson demand
//! * [`fleet`] – vehicle state machine and constant-speed motion
//! * [`matching`] – pre-assignment, route feasibility, RTV graph, exact assignment
//! * [`engine`] – time-stepped simulation loop, sweeps and reports
//! * [`laws`] – system load, scaling laws, load approximation, error metrics

pub mod demand;
pub mod engine;
pub mod error;
pub mod fleet;
pub mod laws;
pub mod matching;
pub mod network;

pub use error::{Error, Result};
