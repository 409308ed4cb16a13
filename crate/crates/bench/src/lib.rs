//! Shared fixtures for the benchmarks.

use majority_lab::{MajorityState, ProcessSpec};

pub fn spec(j: u32) -> ProcessSpec {
    ProcessSpec::new(j).expect("benchmark sample sizes are valid")
}

/// A state with a fixed fraction of `a` agents.
pub fn state(n: u64, alpha: f64) -> MajorityState {
    MajorityState::new(n, (alpha * n as f64).round() as u64).expect("alpha lies in [0, 1]")
}
