//! Monte Carlo checks of the 3-Majority analysis: majority preservation,
//! the bias floor and doubling window, and the minority-extinction tail.

use rayon::prelude::*;
use serde::Serialize;

use super::config::InitRule;
use super::stats::{binomial_se, Summary};
use crate::error::{Error, Result};
use crate::kernels::extinction_drift_bound;
use crate::simulate::{default_step_cap, run_to_consensus, sequential_step, DEFAULT_CAP_MULTIPLIER};
use crate::types::{MajorityState, ModelKind, Opinion, ProcessSpec, SeedPolicy};

fn three() -> ProcessSpec {
    ProcessSpec::new(3).expect("3 is a valid sample size")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreservationReport {
    pub n: u64,
    pub j: u32,
    pub zeta: f64,
    pub s0: u64,
    pub runs: u64,
    /// Runs absorbed at `s = n`.
    pub preserved: u64,
    pub censored: u64,
    pub fraction: f64,
}

/// Start at `ceil(n/2 + zeta sqrt(n ln n))` and count how often `a` wins.
pub fn check_majority_preservation(
    model: ModelKind,
    j: u32,
    n: u64,
    zeta: f64,
    runs: u64,
    policy: SeedPolicy,
) -> Result<PreservationReport> {
    if zeta < 0.0 || !zeta.is_finite() {
        return Err(Error::InvalidArgument(format!("zeta = {zeta} must be non-negative")));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let spec = ProcessSpec::new(j)?;
    let start = InitRule::Bias { zeta }.initial_state(n)?;
    let cap = default_step_cap(model, n, DEFAULT_CAP_MULTIPLIER);
    let outcomes: Vec<(bool, bool)> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let out = run_to_consensus(spec, model, start, &mut policy.derive_stream(i), cap, None);
            (out.final_state.winner() == Some(Opinion::A), out.censored)
        })
        .collect();
    let preserved = outcomes.iter().filter(|o| o.0).count() as u64;
    Ok(PreservationReport {
        n,
        j,
        zeta,
        s0: start.s(),
        runs,
        preserved,
        censored: outcomes.iter().filter(|o| o.1).count() as u64,
        fraction: preserved as f64 / runs as f64,
    })
}

/// Per-run result of [`check_bias_doubling`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingRun {
    /// The bias fell below half its starting value before reaching the target.
    pub floor_violated: bool,
    /// Productive (count-changing) steps until the target bias was reached.
    pub productive_steps: Option<u64>,
    pub total_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingReport {
    pub n: u64,
    pub s0: u64,
    pub delta0: f64,
    pub target: f64,
    pub runs: u64,
    pub floor_violation_rate: f64,
    /// Runs reaching the target within `2n` productive steps.
    pub within_2n_rate: f64,
    pub unreached: u64,
    pub productive_steps: Option<Summary>,
}

/// Sequential 3-Majority from bias `delta0` (rounded up to a whole count):
/// does the bias stay above `delta0 / 2`, and how many productive steps does
/// it take to reach `min(2 delta0, n/2)`?
pub fn check_bias_doubling(n: u64, delta0: f64, runs: u64, policy: SeedPolicy) -> Result<DoublingReport> {
    if !(delta0 >= 1.0) {
        return Err(Error::InvalidArgument(format!("delta0 = {delta0} must be at least 1")));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let half = n as f64 / 2.0;
    let s0 = (half + delta0).ceil().min(n as f64) as u64;
    let start = MajorityState::new(n, s0)?;
    let bias0 = start.bias();
    let target = (2.0 * bias0).min(half);
    let floor = bias0 / 2.0;
    let cap = default_step_cap(ModelKind::Sequential, n, DEFAULT_CAP_MULTIPLIER);
    let spec = three();
    let per_run: Vec<DoublingRun> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy.derive_stream(i);
            let mut state = start;
            let (mut total, mut productive) = (0u64, 0u64);
            let mut violated = false;
            while state.bias() < target && total < cap {
                let next = sequential_step(spec, state, &mut rng);
                total += 1;
                if next != state {
                    productive += 1;
                    state = next;
                    if state.bias() < floor {
                        violated = true;
                    }
                    if state.s() == 0 {
                        break;
                    }
                }
            }
            DoublingRun {
                floor_violated: violated,
                productive_steps: (state.bias() >= target).then_some(productive),
                total_steps: total,
            }
        })
        .collect();
    let r = runs as f64;
    let reached: Vec<f64> = per_run.iter().filter_map(|d| d.productive_steps).map(|p| p as f64).collect();
    Ok(DoublingReport {
        n,
        s0,
        delta0: bias0,
        target,
        runs,
        floor_violation_rate: per_run.iter().filter(|d| d.floor_violated).count() as f64 / r,
        within_2n_rate: reached.iter().filter(|&&p| p <= 2.0 * n as f64).count() as f64 / r,
        unreached: runs - reached.len() as u64,
        productive_steps: Summary::of(&reached),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftTailReport {
    pub n: u64,
    pub eps: f64,
    pub r: f64,
    /// Starting minority count `floor((1/2 - eps) n)`.
    pub s0: u64,
    pub delta: f64,
    /// `ceil((r + ln s0) / delta)`.
    pub time_bound: u64,
    pub runs: u64,
    pub exceedances: u64,
    pub fraction: f64,
    /// `e^{-r}`.
    pub tail_bound: f64,
    /// `e^{-r}` plus three binomial standard errors.
    pub threshold: f64,
    pub passed: bool,
}

/// Sequential 3-Majority started from minority `floor((1/2 - eps) n)`:
/// fraction of runs whose minority survives beyond `ceil((r + ln s0) / delta)`
/// steps with `delta = (1 + eps/2) eps / (4 n)`, compared to `e^{-r}`.
/// Runs are stopped at the bound, so a minority takeover also counts as an
/// exceedance.
pub fn check_drift_tail(n: u64, eps: f64, r: f64, runs: u64, policy: SeedPolicy) -> Result<DriftTailReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must lie in (0, 1/2)")));
    }
    if !(r >= 0.0) || runs == 0 {
        return Err(Error::InvalidArgument("need r >= 0 and at least one run".into()));
    }
    let s0 = ((0.5 - eps) * n as f64).floor() as u64;
    if s0 == 0 {
        return Err(Error::InvalidArgument(format!("n = {n} too small for eps = {eps}")));
    }
    let start = MajorityState::new(n, s0)?;
    let delta = extinction_drift_bound(n as f64, eps);
    let time_bound = ((r + (s0 as f64).ln()) / delta).ceil() as u64;
    let spec = three();
    let exceed: u64 = (0..runs)
        .into_par_iter()
        .map(|i| {
            let out = run_to_consensus(spec, ModelKind::Sequential, start, &mut policy.derive_stream(i), time_bound, None);
            u64::from(out.final_state.s() != 0)
        })
        .sum();
    let tail_bound = (-r).exp();
    let threshold = tail_bound + 3.0 * binomial_se(tail_bound, runs);
    let fraction = exceed as f64 / runs as f64;
    Ok(DriftTailReport {
        n,
        eps,
        r,
        s0,
        delta,
        time_bound,
        runs,
        exceedances: exceed,
        fraction,
        tail_bound,
        threshold,
        passed: fraction <= threshold,
    })
}
