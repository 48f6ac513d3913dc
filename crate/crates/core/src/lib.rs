//! Stochastic shortest path (SSP) solvers for known and estimated transitions.
//!
//! The crate covers exact planning (value and policy iteration, occupancy
//! measures), extended value iteration over divergence balls, closed-form
//! exploration-bonus bounds and the clamped "dagger" operators built on them,
//! a two-state piecewise analysis, a region-enumeration solver for the
//! dagger program, and an online learning simulator.
//!
//! States are `0..N`; the goal is implicit and receives the residual mass
//! `1 - sum(row)` of every transition row.

pub mod divergence;
pub mod duality;
mod error;
pub mod evi;
pub mod gen;
pub mod kernels;
pub mod learning;
pub mod linalg;
pub mod mdp;
pub mod par;
pub mod planning;
pub mod program;
pub mod two_state;

pub use error::{Error, Result};
pub use mdp::{Policy, PolicyMatrices, SspInstance, ValueVector};
