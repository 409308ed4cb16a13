//! Constructive couplings of `P_j` and `P_{j+1}` and pathwise dominance
//! checks on the coupled trajectories.
//!
//! Order is tracked on the majority count `m = max(s, n - s)`, the quantity
//! whose hitting time of `n` is the convergence time. In the raw `a`-count
//! the extra draw of `P_{2j+1}` pushes *towards `b`* whenever `a` is the
//! minority, so equal raw states below `n/2` would already break order. The
//! folded chains are monotone in the state and ordered in `j` for both
//! models (see [`crate::chain`]), which is exactly what the inverse-CDF
//! coupling needs.
//!
//! Each coupled step draws folded successors and then restores the raw
//! `a`-count with a label draw, `P[s' = r | m'] = K(s, r) / (K(s, m') + K(s, n - m'))`,
//! so both raw marginals are exactly those of the uncoupled processes.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{
    binomial_pmf_vec, folded_gossip_row, gossip_row, sequential_kernel, Row, StepKernel,
    DENSE_KERNEL_MAX_N,
};
use crate::simulate::run_to_consensus;
use crate::types::{MajorityState, ModelKind, Opinion, ProcessSpec, SeedPolicy};

/// Largest undecided group resolved with explicit per-agent uniforms; larger
/// groups use the equivalent binomial thinning.
const EXPLICIT_UNDECIDED_MAX: u64 = 256;

/// Inverse-CDF coupling of one step: both successors are read off the same
/// uniform `u`. Whenever the high row at `s_high` dominates the low row at
/// `s_low`, the result satisfies `next_high >= next_low` for every `u`.
pub fn quantile_couple_step(
    kernel_low: &StepKernel,
    kernel_high: &StepKernel,
    s_low: usize,
    s_high: usize,
    u: f64,
) -> Result<(usize, usize)> {
    if kernel_low.n() != kernel_high.n() {
        return Err(Error::InvalidArgument(format!(
            "kernels have different population sizes ({} vs {})",
            kernel_low.n(),
            kernel_high.n()
        )));
    }
    if s_high < s_low {
        return Err(Error::InvalidArgument(format!(
            "coupling precondition broken: s_high = {s_high} < s_low = {s_low}"
        )));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("u = {u} outside [0, 1)")));
    }
    Ok((
        kernel_low.row(s_low).inverse_cdf(u),
        kernel_high.row(s_high).inverse_cdf(u),
    ))
}

/// Count how many of the shared uniforms fall below each threshold:
/// `(#{u < 1/2}, #{u < alpha})`. With `alpha >= 1/2` the second count
/// dominates the first sample by sample.
pub fn resolve_undecided(uniforms: &[f64], alpha: f64) -> (u64, u64) {
    let low = uniforms.iter().filter(|&&u| u < 0.5).count() as u64;
    let high = uniforms.iter().filter(|&&u| u < alpha).count() as u64;
    (low, high)
}

fn binomial_draw<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p)
        .expect("probability lies in (0, 1)")
        .sample(rng)
}

/// One gossip round of `P_{2j}` and `P_{2j+1}` from a common state, with the
/// first `2j` samples of every agent shared.
///
/// Counts are oriented to the current majority (`alpha >= 1/2`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StructuralRound {
    pub alpha: f64,
    /// Agents whose shared samples hold at least `j + 1` majority draws.
    pub z_a: u64,
    /// Agents whose shared samples hold at least `j + 1` minority draws.
    pub z_b: u64,
    /// Agents with an exact `j : j` split.
    pub m_u: u64,
    /// Undecided agents adopting the majority under `P_{2j}` (fair coin).
    pub z_u_low: u64,
    /// Undecided agents adopting the majority under `P_{2j+1}` (extra draw).
    pub z_u_high: u64,
}

impl StructuralRound {
    /// Next majority-opinion count under `P_{2j}`.
    pub fn low_next(&self) -> u64 {
        self.z_a + self.z_u_low
    }

    /// Next majority-opinion count under `P_{2j+1}`.
    pub fn high_next(&self) -> u64 {
        self.z_a + self.z_u_high
    }
}

fn check_structural_args(low: ProcessSpec, n: u64, majority: u64) -> Result<()> {
    if low.has_ties() && 2 * majority >= n && majority <= n {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "structural round needs an even low process and a majority count in \
             ceil(n/2)..=n (got {low}, n = {n}, m = {majority})"
        )))
    }
}

/// Draw one structural round. The classification counts come from the
/// exact trinomial with per-agent probabilities
/// `P[>= j+1 majority draws]`, `P[>= j+1 minority draws]` and `P[j : j]`;
/// the undecided agents are resolved with shared uniforms against the
/// thresholds `1/2` and `alpha`.
pub fn structural_gossip_round<R: Rng + ?Sized>(
    low: ProcessSpec,
    n: u64,
    majority: u64,
    rng: &mut R,
) -> Result<StructuralRound> {
    check_structural_args(low, n, majority)?;
    let half = (low.j() / 2) as usize;
    let alpha = majority as f64 / n as f64;
    let pmf = binomial_pmf_vec(low.j() as u64, alpha);
    let p_a: f64 = pmf[half + 1..].iter().sum();
    let p_u = pmf[half];
    let p_b: f64 = pmf[..half].iter().sum();
    let z_a = binomial_draw(n, p_a, rng);
    let rest = n - z_a;
    let z_b = if p_b + p_u > 0.0 {
        binomial_draw(rest, p_b / (p_b + p_u), rng)
    } else {
        0
    };
    let m_u = rest - z_b;
    let (z_u_low, z_u_high) = if m_u <= EXPLICIT_UNDECIDED_MAX {
        let uniforms: Vec<f64> = (0..m_u).map(|_| rng.random::<f64>()).collect();
        resolve_undecided(&uniforms, alpha)
    } else {
        // Given u >= 1/2, P[u < alpha] = 2 alpha - 1: the same nesting as
        // the explicit thresholds, drawn in two binomials.
        let low_count = binomial_draw(m_u, 0.5, rng);
        let extra = binomial_draw(m_u - low_count, 2.0 * alpha - 1.0, rng);
        (low_count, low_count + extra)
    };
    Ok(StructuralRound {
        alpha,
        z_a,
        z_b,
        m_u,
        z_u_low,
        z_u_high,
    })
}

/// Per-agent version of [`structural_gossip_round`]: every agent draws its
/// `2j` shared contacts explicitly, and undecided agents draw one uniform
/// serving as both the tie coin (`u < 1/2`) and the extra contact (`u < alpha`).
pub fn structural_gossip_round_reference<R: Rng + ?Sized>(
    low: ProcessSpec,
    n: u64,
    majority: u64,
    rng: &mut R,
) -> Result<StructuralRound> {
    check_structural_args(low, n, majority)?;
    let half = low.j() / 2;
    let alpha = majority as f64 / n as f64;
    let mut round = StructuralRound {
        alpha,
        z_a: 0,
        z_b: 0,
        m_u: 0,
        z_u_low: 0,
        z_u_high: 0,
    };
    for _ in 0..n {
        let seen = (0..low.j()).filter(|_| rng.random_range(0..n) < majority).count() as u32;
        if seen > half {
            round.z_a += 1;
        } else if seen < half {
            round.z_b += 1;
        } else {
            round.m_u += 1;
            let u = rng.random::<f64>();
            round.z_u_low += (u < 0.5) as u64;
            round.z_u_high += (u < alpha) as u64;
        }
    }
    Ok(round)
}

/// One row of a coupled trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoupledPoint {
    pub t: u64,
    pub x_low: u64,
    pub x_high: u64,
    /// `majority_high >= majority_low` after this step.
    pub dominance_flag: bool,
    pub majority_low: u64,
    pub majority_high: u64,
}

/// Outcome of one coupled run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSummary {
    #[serde(rename = "T_low")]
    pub t_low: Option<u64>,
    #[serde(rename = "T_high")]
    pub t_high: Option<u64>,
    pub winner_low: Option<Opinion>,
    pub winner_high: Option<Opinion>,
    pub steps: u64,
    pub censored: bool,
    /// Structural gossip rounds whose undecided resolution was checked.
    pub nested_rounds: u64,
}

/// A coupled pair of trajectories of `P_{j_low}` and `P_{j_low + 1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledTrace {
    pub j_low: u32,
    pub j_high: u32,
    pub model: ModelKind,
    pub n: u64,
    pub s0: u64,
    /// Every step when recording was requested, otherwise empty.
    pub points: Vec<CoupledPoint>,
    pub summary: TraceSummary,
}

impl CoupledTrace {
    /// Dominance held at every recorded step.
    pub fn all_dominant(&self) -> bool {
        self.points.iter().all(|p| p.dominance_flag)
    }
}

#[inline]
fn fold(n: u64, s: u64) -> u64 {
    s.max(n - s)
}

/// Raw successor consistent with a folded successor `m_next`, chosen with the
/// raw row's conditional odds.
fn unfold(row: &Row<'_>, n: u64, m_next: u64, v: f64) -> u64 {
    let (r1, r2) = (m_next, n - m_next);
    if r1 == r2 {
        return r1;
    }
    let (p1, p2) = (row.prob(r1 as usize), row.prob(r2 as usize));
    if p2 == 0.0 {
        r1
    } else if p1 == 0.0 || v >= p1 / (p1 + p2) {
        r2
    } else {
        r1
    }
}

fn needs_label(row: &Row<'_>, n: u64, m_next: u64) -> bool {
    let (r1, r2) = (m_next, n - m_next);
    r1 != r2 && row.prob(r1 as usize) > 0.0 && row.prob(r2 as usize) > 0.0
}

/// State shared by both coupled runners.
struct Tracker {
    n: u64,
    x_low: u64,
    x_high: u64,
    t: u64,
    t_low: Option<u64>,
    t_high: Option<u64>,
    record: bool,
    points: Vec<CoupledPoint>,
}

impl Tracker {
    fn new(n: u64, s0: u64, record: bool) -> Self {
        let absorbed = s0 == 0 || s0 == n;
        let mut tracker = Tracker {
            n,
            x_low: s0,
            x_high: s0,
            t: 0,
            t_low: absorbed.then_some(0),
            t_high: absorbed.then_some(0),
            record,
            points: Vec::new(),
        };
        tracker.push();
        tracker
    }

    fn m_low(&self) -> u64 {
        fold(self.n, self.x_low)
    }

    fn m_high(&self) -> u64 {
        fold(self.n, self.x_high)
    }

    fn done(&self) -> bool {
        self.t_low.is_some() && self.t_high.is_some()
    }

    fn push(&mut self) {
        if self.record {
            self.points.push(CoupledPoint {
                t: self.t,
                x_low: self.x_low,
                x_high: self.x_high,
                dominance_flag: self.m_high() >= self.m_low(),
                majority_low: self.m_low(),
                majority_high: self.m_high(),
            });
        }
    }

    fn advance(&mut self, x_low: u64, x_high: u64, detail: impl FnOnce() -> String) -> Result<()> {
        let (before_low, before_high) = (self.x_low, self.x_high);
        self.x_low = x_low;
        self.x_high = x_high;
        self.t += 1;
        if self.t_low.is_none() && self.m_low() == self.n {
            self.t_low = Some(self.t);
        }
        if self.t_high.is_none() && self.m_high() == self.n {
            self.t_high = Some(self.t);
        }
        self.push();
        if self.m_high() < self.m_low() {
            return Err(Error::DominanceViolation(format!(
                "step {}: (x_low, x_high) {} -> {}, {} -> {}; majority counts {} > {}; {}",
                self.t,
                before_low,
                x_low,
                before_high,
                x_high,
                self.m_low(),
                self.m_high(),
                detail()
            )));
        }
        Ok(())
    }

    fn finish(self, low: ProcessSpec, high: ProcessSpec, model: ModelKind, s0: u64, nested: u64) -> CoupledTrace {
        let winner = |x: u64, hit: Option<u64>| {
            hit.and_then(|_| MajorityState::new(self.n, x).ok().and_then(|s| s.winner()))
        };
        let summary = TraceSummary {
            t_low: self.t_low,
            t_high: self.t_high,
            winner_low: winner(self.x_low, self.t_low),
            winner_high: winner(self.x_high, self.t_high),
            steps: self.t,
            censored: !self.done(),
            nested_rounds: nested,
        };
        CoupledTrace {
            j_low: low.j(),
            j_high: high.j(),
            model,
            n: self.n,
            s0,
            points: self.points,
            summary,
        }
    }
}

fn check_start(n: u64, s0: u64) -> Result<()> {
    MajorityState::new(n, s0).map(|_| ())
}

/// Coupled sequential runs of `P_{j_low}` and `P_{j_low + 1}`.
#[derive(Clone, Debug)]
pub struct SequentialCoupler {
    low: ProcessSpec,
    high: ProcessSpec,
    raw_low: StepKernel,
    raw_high: StepKernel,
    folded_low: StepKernel,
    folded_high: StepKernel,
}

impl SequentialCoupler {
    pub fn new(j_low: u32, n: u64) -> Result<Self> {
        if j_low < 2 {
            return Err(Error::InvalidArgument(format!(
                "coupled hierarchy starts at j_low = 2 (got {j_low})"
            )));
        }
        let low = ProcessSpec::new(j_low)?;
        let high = low.next()?;
        let raw_low = sequential_kernel(low, n as usize)?;
        let raw_high = sequential_kernel(high, n as usize)?;
        Ok(SequentialCoupler {
            low,
            high,
            folded_low: raw_low.fold(),
            folded_high: raw_high.fold(),
            raw_low,
            raw_high,
        })
    }

    pub fn n(&self) -> u64 {
        self.raw_low.n() as u64
    }

    /// Run until both processes reach consensus or `step_cap` steps. One
    /// shared uniform drives the folded step; a second shared uniform is
    /// drawn only when a label must be restored near the middle.
    pub fn run<R: Rng + ?Sized>(
        &self,
        s0: u64,
        rng: &mut R,
        step_cap: u64,
        record: bool,
    ) -> Result<CoupledTrace> {
        let n = self.n();
        check_start(n, s0)?;
        let mut tr = Tracker::new(n, s0, record);
        while !tr.done() && tr.t < step_cap {
            let u = rng.random::<f64>();
            let (ml, mh) = quantile_couple_step(
                &self.folded_low,
                &self.folded_high,
                tr.m_low() as usize,
                tr.m_high() as usize,
                u,
            )?;
            let (ml, mh) = (ml as u64, mh as u64);
            let row_low = self.raw_low.row(tr.x_low as usize);
            let row_high = self.raw_high.row(tr.x_high as usize);
            let v = if needs_label(&row_low, n, ml) || needs_label(&row_high, n, mh) {
                rng.random::<f64>()
            } else {
                0.0
            };
            let next_low = unfold(&row_low, n, ml, v);
            let next_high = unfold(&row_high, n, mh, v);
            tr.advance(next_low, next_high, || format!("u = {u}, v = {v}"))?;
        }
        Ok(tr.finish(self.low, self.high, ModelKind::Sequential, s0, 0))
    }
}

/// Coupled gossip runs of `P_{j_low}` and `P_{j_low + 1}`.
///
/// For even `j_low` the high process's round is drawn with
/// [`structural_gossip_round`] (its shadow `P_{2j}` outcome is checked for
/// per-sample nesting); the low process is then attached by transporting the
/// high outcome's folded quantile onto the low folded row, which is
/// pointwise below it. For odd `j_low` the two kernels coincide and both
/// processes read the same uniform.
#[derive(Clone, Debug)]
pub struct GossipCoupler {
    low: ProcessSpec,
    high: ProcessSpec,
    n: u64,
}

impl GossipCoupler {
    pub fn new(j_low: u32, n: u64) -> Result<Self> {
        if j_low < 2 {
            return Err(Error::InvalidArgument(format!(
                "coupled hierarchy starts at j_low = 2 (got {j_low})"
            )));
        }
        if n == 0 || n as usize > DENSE_KERNEL_MAX_N {
            return Err(Error::Capacity(format!(
                "coupled gossip rounds need dense rows; n = {n} is outside 1..={DENSE_KERNEL_MAX_N}"
            )));
        }
        let low = ProcessSpec::new(j_low)?;
        Ok(GossipCoupler {
            low,
            high: low.next()?,
            n,
        })
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        s0: u64,
        rng: &mut R,
        round_cap: u64,
        record: bool,
    ) -> Result<CoupledTrace> {
        let n = self.n;
        let nu = n as usize;
        check_start(n, s0)?;
        let mut tr = Tracker::new(n, s0, record);
        let mut nested = 0u64;
        while !tr.done() && tr.t < round_cap {
            let (m_low, m_high) = (tr.m_low(), tr.m_high());
            let raw_low = Row::owned(0, gossip_row(self.low, nu, tr.x_low as usize));
            let folded_low = Row::owned(0, folded_gossip_row(self.low, nu, m_low as usize));
            let folded_high = Row::owned(0, folded_gossip_row(self.high, nu, m_high as usize));
            let (next_low, next_high, note) = if self.low.has_ties() {
                let round = structural_gossip_round(self.low, n, m_high, rng)?;
                if round.z_u_high < round.z_u_low || round.z_a + round.z_b + round.m_u != n {
                    return Err(Error::DominanceViolation(format!(
                        "round {}: structural nesting broken: {round:?}",
                        tr.t + 1
                    )));
                }
                nested += 1;
                let oriented = round.high_next();
                let next_high = if 2 * tr.x_high >= n { oriented } else { n - oriented };
                let mh = fold(n, next_high) as usize;
                // Randomized probability integral transform of the folded
                // high outcome, read back through the low folded row.
                let below = if mh == 0 { 0.0 } else { folded_high.cdf(mh - 1) };
                let w = below + rng.random::<f64>() * folded_high.prob(mh);
                let ml = folded_low.inverse_cdf(w) as u64;
                let v = if needs_label(&raw_low, n, ml) { rng.random::<f64>() } else { 0.0 };
                (unfold(&raw_low, n, ml, v), next_high, format!("{round:?}, w = {w}, v = {v}"))
            } else {
                let raw_high = Row::owned(0, gossip_row(self.high, nu, tr.x_high as usize));
                let u = rng.random::<f64>();
                let ml = folded_low.inverse_cdf(u) as u64;
                let mh = folded_high.inverse_cdf(u) as u64;
                let v = if needs_label(&raw_low, n, ml) || needs_label(&raw_high, n, mh) {
                    rng.random::<f64>()
                } else {
                    0.0
                };
                (
                    unfold(&raw_low, n, ml, v),
                    unfold(&raw_high, n, mh, v),
                    format!("u = {u}, v = {v}"),
                )
            };
            tr.advance(next_low, next_high, || note)?;
        }
        Ok(tr.finish(self.low, self.high, ModelKind::Gossip, s0, nested))
    }
}

/// Build the coupler for `model` and run one coupled trajectory.
pub fn run_coupled<R: Rng + ?Sized>(
    model: ModelKind,
    j_low: u32,
    n: u64,
    s0: u64,
    rng: &mut R,
    step_cap: u64,
    record: bool,
) -> Result<CoupledTrace> {
    match model {
        ModelKind::Sequential => SequentialCoupler::new(j_low, n)?.run(s0, rng, step_cap, record),
        ModelKind::Gossip => GossipCoupler::new(j_low, n)?.run(s0, rng, step_cap, record),
    }
}

pub fn run_coupled_sequential<R: Rng + ?Sized>(
    j_low: u32,
    n: u64,
    s0: u64,
    rng: &mut R,
    step_cap: u64,
) -> Result<CoupledTrace> {
    SequentialCoupler::new(j_low, n)?.run(s0, rng, step_cap, true)
}

pub fn run_coupled_gossip<R: Rng + ?Sized>(
    j_low: u32,
    n: u64,
    s0: u64,
    rng: &mut R,
    round_cap: u64,
) -> Result<CoupledTrace> {
    GossipCoupler::new(j_low, n)?.run(s0, rng, round_cap, true)
}

/// Per-run row of a coupled batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledRunRow {
    pub run_index: u64,
    pub s0: u64,
    #[serde(rename = "T_low")]
    pub t_low: Option<u64>,
    #[serde(rename = "T_high")]
    pub t_high: Option<u64>,
    pub winner_low: Option<Opinion>,
    pub winner_high: Option<Opinion>,
    pub steps: u64,
    pub censored: bool,
    /// Pathwise order held at every step.
    pub dominance: bool,
}

/// Outcome of many coupled runs from one start.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledBatch {
    pub model: ModelKind,
    pub j_low: u32,
    pub n: u64,
    pub s0: u64,
    pub rows: Vec<CoupledRunRow>,
    /// Full dumps of every violating step, in run order.
    pub violations: Vec<String>,
    /// Step-by-step traces of the first runs, when requested.
    pub traces: Vec<CoupledTrace>,
}

impl CoupledBatch {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    /// Runs where the higher process took strictly longer.
    pub fn time_inversions(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| matches!((r.t_low, r.t_high), (Some(l), Some(h)) if h > l))
            .count()
    }
}

/// Run `runs` coupled trajectories in parallel (run `i` uses
/// `policy.derive_stream(i)`), keeping full traces of the first `traces` runs.
/// Dominance violations are collected rather than aborting the batch.
#[allow(clippy::too_many_arguments)]
pub fn run_coupled_batch(
    model: ModelKind,
    j_low: u32,
    n: u64,
    s0: u64,
    runs: u64,
    policy: SeedPolicy,
    step_cap: u64,
    traces: u64,
) -> Result<CoupledBatch> {
    use rayon::prelude::*;
    check_start(n, s0)?;
    enum Coupler {
        Seq(SequentialCoupler),
        Gossip(GossipCoupler),
    }
    let coupler = match model {
        ModelKind::Sequential => Coupler::Seq(SequentialCoupler::new(j_low, n)?),
        ModelKind::Gossip => Coupler::Gossip(GossipCoupler::new(j_low, n)?),
    };
    let results: Vec<Result<CoupledTrace>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy.derive_stream(i);
            let record = i < traces;
            match &coupler {
                Coupler::Seq(c) => c.run(s0, &mut rng, step_cap, record),
                Coupler::Gossip(c) => c.run(s0, &mut rng, step_cap, record),
            }
        })
        .collect();
    let mut batch = CoupledBatch {
        model,
        j_low,
        n,
        s0,
        rows: Vec::with_capacity(runs as usize),
        violations: Vec::new(),
        traces: Vec::new(),
    };
    for (i, result) in results.into_iter().enumerate() {
        let i = i as u64;
        match result {
            Ok(trace) => {
                let s = &trace.summary;
                batch.rows.push(CoupledRunRow {
                    run_index: i,
                    s0,
                    t_low: s.t_low,
                    t_high: s.t_high,
                    winner_low: s.winner_low,
                    winner_high: s.winner_high,
                    steps: s.steps,
                    censored: s.censored,
                    dominance: true,
                });
                if i < traces {
                    batch.traces.push(trace);
                }
            }
            Err(Error::DominanceViolation(msg)) => {
                batch.violations.push(format!("run {i}: {msg}"));
                batch.rows.push(CoupledRunRow {
                    run_index: i,
                    s0,
                    t_low: None,
                    t_high: None,
                    winner_low: None,
                    winner_high: None,
                    steps: 0,
                    censored: false,
                    dominance: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(batch)
}

/// Empirical survival functions of independent (uncoupled) runs of two
/// adjacent processes, evaluated at every observed convergence time.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalDominance {
    pub runs: u64,
    pub t: Vec<u64>,
    pub survival_low: Vec<f64>,
    pub survival_high: Vec<f64>,
    /// Standard error of `survival_high - survival_low` at each point.
    pub band: Vec<f64>,
    /// Times where the high curve exceeds the low one by more than 3 bands.
    pub flags: Vec<u64>,
    /// Times where the low curve exceeds the high one by more than 3 bands.
    pub reverse_flags: Vec<u64>,
    pub censored_low: u64,
    pub censored_high: u64,
}

/// Compare `P[T_high > t]` against `P[T_low > t]` from `runs` independent
/// runs of each process.
///
/// Each point's band uses the Agresti-Coull centre `(x + 2) / (runs + 4)` in
/// the binomial variance, so a single run cannot produce a flag from a
/// zero-variance estimate. Censored runs count as surviving past every `t`.
pub fn estimate_dominance_empirical(
    j_low: u32,
    model: ModelKind,
    n: u64,
    s0: u64,
    runs: u64,
    policy: SeedPolicy,
    step_cap: u64,
) -> Result<EmpiricalDominance> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let low = ProcessSpec::new(j_low)?;
    let high = low.next()?;
    let start = MajorityState::new(n, s0)?;
    let sample = |spec: ProcessSpec, side: u64| -> Vec<Option<u64>> {
        let policy = policy.child(side);
        (0..runs)
            .map(|i| {
                let out = run_to_consensus(spec, model, start, &mut policy.derive_stream(i), step_cap, None);
                (!out.censored).then_some(out.steps)
            })
            .collect()
    };
    let times_low = sample(low, 0);
    let times_high = sample(high, 1);
    let mut grid: Vec<u64> = times_low
        .iter()
        .chain(&times_high)
        .flatten()
        .copied()
        .chain(std::iter::once(0))
        .collect();
    grid.sort_unstable();
    grid.dedup();
    let surviving = |times: &[Option<u64>], t: u64| {
        times.iter().filter(|x| x.is_none_or(|v| v > t)).count() as u64
    };
    let r = runs as f64;
    let mut out = EmpiricalDominance {
        runs,
        t: Vec::with_capacity(grid.len()),
        survival_low: Vec::with_capacity(grid.len()),
        survival_high: Vec::with_capacity(grid.len()),
        band: Vec::with_capacity(grid.len()),
        flags: Vec::new(),
        reverse_flags: Vec::new(),
        censored_low: times_low.iter().filter(|x| x.is_none()).count() as u64,
        censored_high: times_high.iter().filter(|x| x.is_none()).count() as u64,
    };
    for &t in &grid {
        let (xl, xh) = (surviving(&times_low, t), surviving(&times_high, t));
        let (sl, sh) = (xl as f64 / r, xh as f64 / r);
        let centred = |x: u64| (x as f64 + 2.0) / (r + 4.0);
        let (cl, ch) = (centred(xl), centred(xh));
        let band = (cl * (1.0 - cl) / r + ch * (1.0 - ch) / r).sqrt();
        if sh - sl > 3.0 * band {
            out.flags.push(t);
        }
        if sl - sh > 3.0 * band {
            out.reverse_flags.push(t);
        }
        out.t.push(t);
        out.survival_low.push(sl);
        out.survival_high.push(sh);
        out.band.push(band);
    }
    Ok(out)
}
