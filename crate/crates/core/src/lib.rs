//! Multi-agent dynamic spectrum access simulator.
//!
//! Secondary users sense a set of licensed channels, pick one (or stay idle)
//! each slot and learn from the reward. Channel occupancy follows per-channel
//! Markov chains; links see WINNER II path loss with Rician fading.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod environment;
pub mod error;
pub mod harness;
pub mod neural;
pub mod reservoir;
pub mod rng;
pub mod snapshot;

pub use error::{DsaError, Result};
