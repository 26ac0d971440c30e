//! Energy-aware cell activation, user association and spectrum allocation
//! for heterogeneous cellular networks.
//!
//! * [`radio`]: scenarios, interference patterns and spectral efficiencies.
//! * [`queueing`]: traffic profiles and M/M/1 delay bookkeeping.
//! * [`lp`]: sparse LP models and a bounded-variable revised simplex.
//! * [`allocator`]: the allocation LPs, reweighted l1 solvers, exact oracle
//!   and support reduction.
//! * [`postprocess`]: delay minimization over a fixed active set.
//! * [`experiments`]: sweeps, capacity search and layout dumps.

pub mod allocator;
pub mod error;
pub mod experiments;
pub mod lp;
pub mod postprocess;
pub mod queueing;
pub mod radio;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
