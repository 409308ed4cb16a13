//! Domain types shared by every module: the process, the model, the
//! count state of the complete-graph chain and the seeding contract.

use std::fmt;
use std::str::FromStr;

use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported sample size. Binomial evaluation is only asserted
/// accurate up to this many trials.
pub const MAX_SAMPLE_SIZE: u32 = 64;

/// The j-Majority rule: sample `j` agents with replacement (self included)
/// and adopt the sample's majority. Even `j` breaks ties with a fair coin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ProcessSpec {
    j: u32,
}

impl ProcessSpec {
    pub fn new(j: u32) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidArgument("sample size j must be at least 1".into()));
        }
        if j > MAX_SAMPLE_SIZE {
            return Err(Error::InvalidArgument(format!(
                "sample size j = {j} exceeds the supported maximum {MAX_SAMPLE_SIZE}"
            )));
        }
        Ok(ProcessSpec { j })
    }

    #[inline]
    pub fn j(self) -> u32 {
        self.j
    }

    /// Even sample sizes can tie.
    #[inline]
    pub fn has_ties(self) -> bool {
        self.j.is_multiple_of(2)
    }

    /// Number of agreeing draws that decides the outcome: `floor(j/2) + 1`.
    #[inline]
    pub fn decisive(self) -> u32 {
        self.j / 2 + 1
    }

    /// The next process in the hierarchy, `P_{j+1}`.
    pub fn next(self) -> Result<Self> {
        ProcessSpec::new(self.j + 1)
    }
}

impl TryFrom<u32> for ProcessSpec {
    type Error = Error;

    fn try_from(j: u32) -> Result<Self> {
        ProcessSpec::new(j)
    }
}

impl From<ProcessSpec> for u32 {
    fn from(spec: ProcessSpec) -> u32 {
        spec.j
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P_{}", self.j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// All agents update synchronously from the round-start configuration.
    Gossip,
    /// One uniformly chosen agent updates per step.
    Sequential,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gossip => "gossip",
            ModelKind::Sequential => "sequential",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gossip" => Ok(ModelKind::Gossip),
            "sequential" => Ok(ModelKind::Sequential),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected gossip or sequential)"
            ))),
        }
    }
}

/// Which opinion a run converged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opinion {
    A,
    B,
}

impl Opinion {
    pub fn as_str(self) -> &'static str {
        match self {
            Opinion::A => "a",
            Opinion::B => "b",
        }
    }
}

impl fmt::Display for Opinion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Population size `n` and the number `s` of agents holding opinion `a`.
///
/// On the complete graph this count is a sufficient statistic for the
/// whole configuration, so it is the state of every chain in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MajorityState {
    n: u64,
    s: u64,
}

impl MajorityState {
    pub fn new(n: u64, s: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidState("population size n must be positive".into()));
        }
        if s > n {
            return Err(Error::InvalidState(format!("s exceeds n (s = {s}, n = {n})")));
        }
        Ok(MajorityState { n, s })
    }

    #[inline]
    pub fn n(self) -> u64 {
        self.n
    }

    #[inline]
    pub fn s(self) -> u64 {
        self.s
    }

    /// Fraction of agents holding `a`.
    #[inline]
    pub fn alpha(self) -> f64 {
        self.s as f64 / self.n as f64
    }

    #[inline]
    pub fn is_consensus(self) -> bool {
        self.s == 0 || self.s == self.n
    }

    pub fn winner(self) -> Option<Opinion> {
        if self.s == self.n {
            Some(Opinion::A)
        } else if self.s == 0 {
            Some(Opinion::B)
        } else {
            None
        }
    }

    /// Size of the larger camp, `max(s, n - s)`.
    #[inline]
    pub fn majority_count(self) -> u64 {
        self.s.max(self.n - self.s)
    }

    /// Additive bias in the sense `s - n/2`.
    #[inline]
    pub fn bias(self) -> f64 {
        self.s as f64 - self.n as f64 / 2.0
    }

    /// Same configuration with the labels `a` and `b` swapped.
    #[inline]
    pub fn mirrored(self) -> Self {
        MajorityState {
            n: self.n,
            s: self.n - self.s,
        }
    }

    /// Replace the count, re-validating the bound.
    pub fn with_count(self, s: u64) -> Result<Self> {
        MajorityState::new(self.n, s)
    }
}

impl fmt::Display for MajorityState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.s, self.n)
    }
}

/// Build a state from an unchecked signed count, naming the violated bound.
pub fn validate_state(n: u64, s: i64) -> Result<MajorityState> {
    if n == 0 {
        return Err(Error::InvalidState("population size n must be positive".into()));
    }
    if s < 0 {
        return Err(Error::InvalidState(format!("s is negative (s = {s})")));
    }
    MajorityState::new(n, s as u64)
}

/// The random stream type handed to every simulation.
pub type Stream = Pcg64Mcg;

const RUN_ROUND: u64 = 0x9E37_79B9_7F4A_7C15;
const STATE_HI_ROUND: u64 = 0xD1B5_4A32_D192_ED03;
const STATE_LO_ROUND: u64 = 0x8CB9_2BA7_2F3D_8DD7;
const CELL_ROUND: u64 = 0xA076_1D64_78BD_642F;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seeding of independent runs.
///
/// The per-run seed is
///
/// ```text
/// run_seed(master, i) = mix64(master ^ mix64(i ^ 0x9E3779B97F4A7C15))
/// ```
///
/// where `mix64` is the SplitMix64 finalizer. For a fixed master seed this
/// is a bijection of the run index (a composition of bijections), so no two
/// runs share a seed. The 128-bit PCG state is then
/// `mix64(seed ^ 0xD1B54A32D192ED03) << 64 | mix64(seed ^ 0x8CB92BA72F3D8DD7)`.
/// These constants are frozen: changing them changes every trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        SeedPolicy { master_seed }
    }

    pub fn master_seed(self) -> u64 {
        self.master_seed
    }

    pub fn run_seed(self, run_index: u64) -> u64 {
        mix64(self.master_seed ^ mix64(run_index ^ RUN_ROUND))
    }

    pub fn derive_stream(self, run_index: u64) -> Stream {
        stream_from_seed(self.run_seed(run_index))
    }

    /// Independent policy for a labelled sub-experiment (a grid cell, one
    /// side of an uncoupled comparison, ...). The label is hashed so that a
    /// cell's runs do not depend on which other cells share the grid.
    pub fn child(self, label: u64) -> SeedPolicy {
        SeedPolicy::new(mix64(self.master_seed ^ mix64(label ^ CELL_ROUND)))
    }
}

/// Stream for a single already-derived seed.
pub fn stream_from_seed(seed: u64) -> Stream {
    let hi = mix64(seed ^ STATE_HI_ROUND) as u128;
    let lo = mix64(seed ^ STATE_LO_ROUND) as u128;
    Pcg64Mcg::new((hi << 64) | lo)
}

/// Free-function form of [`SeedPolicy::derive_stream`].
pub fn derive_stream(policy: SeedPolicy, run_index: u64) -> Stream {
    policy.derive_stream(run_index)
}
