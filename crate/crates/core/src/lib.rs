//! Exact analysis and Monte Carlo simulation of the j-Majority family of
//! two-opinion consensus processes on the complete graph, in the gossip
//! (synchronous rounds) and sequential (one agent per step) models.

pub mod chain;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod simulate;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    derive_stream, validate_state, MajorityState, ModelKind, Opinion, ProcessSpec, SeedPolicy,
    Stream,
};
