//! Monte Carlo trajectories of j-Majority on the count representation.
//!
//! Sequential steps sample the updater and its `j` contacts literally (with
//! early exit once the sample's majority is decided). Gossip rounds use the
//! exact reduction `next ~ Binomial(n, q(s/n))`: given the round-start
//! count, agents decide independently with the same adoption probability.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::adoption_probability;
use crate::types::{MajorityState, ModelKind, Opinion, ProcessSpec};

/// Default cap multiplier: `100 n ln n` interactions or `100 ln n` rounds.
pub const DEFAULT_CAP_MULTIPLIER: f64 = 100.0;

/// Step cap `ceil(mult * n ln n)` (sequential) or `ceil(mult * ln n)`
/// (gossip), never below 1.
pub fn default_step_cap(model: ModelKind, n: u64, mult: f64) -> u64 {
    let ln = (n as f64).ln();
    let cap = match model {
        ModelKind::Sequential => mult * n as f64 * ln,
        ModelKind::Gossip => mult * ln,
    };
    (cap.ceil() as u64).max(1)
}

/// Draw whether one updating agent adopts `a`, by sampling `j` agents with
/// replacement from a population with `s` of `n` holding `a`.
#[inline]
fn sample_adopts_a<R: Rng + ?Sized>(spec: ProcessSpec, n: u64, s: u64, rng: &mut R) -> bool {
    let j = spec.j();
    let need = spec.decisive();
    let (mut a, mut b) = (0u32, 0u32);
    for _ in 0..j {
        if rng.random_range(0..n) < s {
            a += 1;
            if a == need {
                return true;
            }
        } else {
            b += 1;
            if b == need {
                return false;
            }
        }
    }
    // Only reachable for even j with an exact j/2 : j/2 split.
    debug_assert!(spec.has_ties() && a == b);
    rng.random::<bool>()
}

#[inline]
fn sequential_step_count<R: Rng + ?Sized>(spec: ProcessSpec, n: u64, s: u64, rng: &mut R) -> u64 {
    if s == 0 || s == n {
        return s;
    }
    let updater_holds_a = rng.random_range(0..n) < s;
    let adopts_a = sample_adopts_a(spec, n, s, rng);
    match (updater_holds_a, adopts_a) {
        (true, false) => s - 1,
        (false, true) => s + 1,
        _ => s,
    }
}

/// One interaction of the sequential model.
pub fn sequential_step<R: Rng + ?Sized>(
    spec: ProcessSpec,
    state: MajorityState,
    rng: &mut R,
) -> MajorityState {
    let s = sequential_step_count(spec, state.n(), state.s(), rng);
    state.with_count(s).expect("a step moves the count by at most one")
}

#[inline]
fn gossip_round_count<R: Rng + ?Sized>(spec: ProcessSpec, n: u64, s: u64, rng: &mut R) -> u64 {
    if s == 0 || s == n {
        return s;
    }
    let q = adoption_probability(spec, s as f64 / n as f64);
    if q <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        return n;
    }
    Binomial::new(n, q)
        .expect("q lies strictly inside (0, 1)")
        .sample(rng)
}

/// One synchronous round of the gossip model.
pub fn gossip_round<R: Rng + ?Sized>(
    spec: ProcessSpec,
    state: MajorityState,
    rng: &mut R,
) -> MajorityState {
    let s = gossip_round_count(spec, state.n(), state.s(), rng);
    state.with_count(s).expect("binomial draw lies in 0..=n")
}

/// Literal per-agent gossip round: every agent draws its own `j` contacts
/// and its own tie bit. Cost `O(n j)`; kept as the reference the binomial
/// shortcut is validated against.
pub fn gossip_round_reference<R: Rng + ?Sized>(
    spec: ProcessSpec,
    state: MajorityState,
    rng: &mut R,
) -> MajorityState {
    let (n, s) = (state.n(), state.s());
    let next = (0..n).filter(|_| sample_adopts_a(spec, n, s, rng)).count() as u64;
    state.with_count(next).expect("count of agents is at most n")
}

/// One step of the given model.
pub fn step<R: Rng + ?Sized>(
    spec: ProcessSpec,
    model: ModelKind,
    state: MajorityState,
    rng: &mut R,
) -> MajorityState {
    match model {
        ModelKind::Sequential => sequential_step(spec, state, rng),
        ModelKind::Gossip => gossip_round(spec, state, rng),
    }
}

/// Optional observer of a run: sampled `(t, s)` pairs and the lowest bias
/// `s - n/2` seen.
#[derive(Clone, Debug, Default)]
pub struct TrajectoryProbe {
    cadence: Option<u64>,
    points: Vec<(u64, u64)>,
    track_bias_floor: bool,
    min_bias: Option<f64>,
}

impl TrajectoryProbe {
    /// Record every `cadence`-th state (plus the final one) when `cadence`
    /// is given.
    pub fn new(cadence: Option<u64>, track_bias_floor: bool) -> Self {
        TrajectoryProbe {
            cadence: cadence.filter(|&c| c > 0),
            points: Vec::new(),
            track_bias_floor,
            min_bias: None,
        }
    }

    pub fn points(&self) -> &[(u64, u64)] {
        &self.points
    }

    pub fn min_bias(&self) -> Option<f64> {
        self.min_bias
    }

    fn observe(&mut self, t: u64, state: MajorityState, last: bool) {
        if let Some(c) = self.cadence {
            let due = t.is_multiple_of(c) || last;
            if due && self.points.last().is_none_or(|&(pt, _)| pt < t) {
                self.points.push((t, state.s()));
            }
        }
        if self.track_bias_floor {
            let b = state.bias();
            self.min_bias = Some(self.min_bias.map_or(b, |m| m.min(b)));
        }
    }
}

/// Final state and length of one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOutcome {
    pub final_state: MajorityState,
    pub steps: u64,
    /// The cap was reached before consensus.
    pub censored: bool,
}

/// Iterate the model from `start` until consensus or `step_cap` steps.
pub fn run_to_consensus<R: Rng + ?Sized>(
    spec: ProcessSpec,
    model: ModelKind,
    start: MajorityState,
    rng: &mut R,
    step_cap: u64,
    mut probe: Option<&mut TrajectoryProbe>,
) -> RunOutcome {
    let n = start.n();
    let mut s = start.s();
    let mut steps = 0u64;
    if let Some(p) = probe.as_deref_mut() {
        p.observe(0, start, start.is_consensus());
    }
    let advance = match model {
        ModelKind::Sequential => sequential_step_count::<R>,
        ModelKind::Gossip => gossip_round_count::<R>,
    };
    match probe {
        None => {
            while s != 0 && s != n && steps < step_cap {
                s = advance(spec, n, s, rng);
                steps += 1;
            }
        }
        Some(p) => {
            while s != 0 && s != n && steps < step_cap {
                s = advance(spec, n, s, rng);
                steps += 1;
                let done = s == 0 || s == n || steps == step_cap;
                p.observe(steps, MajorityState::new(n, s).expect("count stays in range"), done);
            }
        }
    }
    let final_state = MajorityState::new(n, s).expect("count stays in range");
    RunOutcome {
        final_state,
        steps,
        censored: !final_state.is_consensus(),
    }
}

/// One Monte Carlo run, as written to `runs.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: u64,
    pub master_seed: u64,
    pub n: u64,
    pub j: u32,
    pub model: ModelKind,
    pub s0: u64,
    /// Empty for censored runs.
    pub winner: Option<Opinion>,
    pub steps: u64,
    /// Interactions divided by `n` (sequential) or rounds (gossip).
    pub parallel_time: f64,
    pub censored: bool,
}

impl RunRecord {
    pub fn new(
        run_index: u64,
        master_seed: u64,
        spec: ProcessSpec,
        model: ModelKind,
        start: MajorityState,
        outcome: &RunOutcome,
    ) -> Self {
        let n = start.n();
        let parallel_time = match model {
            ModelKind::Sequential => outcome.steps as f64 / n as f64,
            ModelKind::Gossip => outcome.steps as f64,
        };
        RunRecord {
            run_index,
            master_seed,
            n,
            j: spec.j(),
            model,
            s0: start.s(),
            winner: if outcome.censored {
                None
            } else {
                outcome.final_state.winner()
            },
            steps: outcome.steps,
            parallel_time,
            censored: outcome.censored,
        }
    }
}

/// Validate a cap supplied by a caller.
pub fn check_step_cap(step_cap: u64) -> Result<()> {
    if step_cap == 0 {
        return Err(Error::InvalidArgument("step cap must be at least 1".into()));
    }
    Ok(())
}
