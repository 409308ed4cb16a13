//! Exact finite-chain analysis on top of [`StepKernel`]: expected absorption
//! times, winning probabilities, survival functions and machine-checked
//! stochastic-dominance verdicts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::StepKernel;
use crate::types::ModelKind;

/// Tolerance for one-step (closed-form) row comparisons.
pub const ROW_TOL: f64 = 1e-12;
/// Tolerance for iterated quantities (survival curves, hitting times).
pub const ITERATED_TOL: f64 = 1e-9;
/// Largest relative residual accepted from the linear solvers.
pub const MAX_RESIDUAL: f64 = 1e-9;

/// Default survival horizon: `ceil(10 n ln n)` steps for the sequential
/// model and `ceil(10 ln n)` rounds for the gossip model.
pub fn default_horizon(model: ModelKind, n: usize) -> usize {
    let ln = (n as f64).ln();
    match model {
        ModelKind::Sequential => (10.0 * n as f64 * ln).ceil() as usize,
        ModelKind::Gossip => (10.0 * ln).ceil() as usize,
    }
}

/// Expected time to absorption and probability of absorbing at `n`, per
/// starting state.
#[derive(Clone, Debug, Serialize)]
pub struct AbsorptionProfile {
    pub n: usize,
    pub first: usize,
    pub expected: Vec<f64>,
    pub win_prob: Vec<f64>,
    /// Largest relative residual of the two solved systems.
    pub residual: f64,
}

impl AbsorptionProfile {
    pub fn expected_time(&self, s: usize) -> f64 {
        self.expected[s - self.first]
    }

    pub fn win_probability(&self, s: usize) -> f64 {
        self.win_prob[s - self.first]
    }

    pub fn states(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.n
    }
}

/// Solve `E_s = 1 + sum_r K(s, r) E_r` on transient states (zero on
/// absorbing ones) together with the probability of being absorbed at `n`.
///
/// Birth-death kernels use direct tridiagonal elimination; dense kernels
/// use Gaussian elimination with partial pivoting.
pub fn expected_absorption(kernel: &StepKernel) -> Result<AbsorptionProfile> {
    let (expected, win_prob) = if kernel.is_tridiagonal() {
        solve_tridiagonal(kernel)?
    } else {
        solve_dense(kernel)?
    };
    let residual = absorption_residual(kernel, &expected, &win_prob);
    if !residual.is_finite() || residual > MAX_RESIDUAL {
        return Err(Error::Numeric(format!(
            "absorption system for n = {} has relative residual {residual:e}; \
             some transient state may not reach an absorbing state",
            kernel.n()
        )));
    }
    Ok(AbsorptionProfile {
        n: kernel.n(),
        first: kernel.first_state(),
        expected,
        win_prob,
        residual,
    })
}

fn solve_tridiagonal(kernel: &StepKernel) -> Result<(Vec<f64>, Vec<f64>)> {
    let states: Vec<usize> = kernel.states().collect();
    let len = states.len();
    let n = kernel.n();
    // Row i: -sub[i] x[i-1] + diag[i] x[i] - sup[i] x[i+1] = rhs[i]
    let mut sub = vec![0.0; len];
    let mut diag = vec![0.0; len];
    let mut sup = vec![0.0; len];
    let mut rhs_time = vec![0.0; len];
    let mut rhs_win = vec![0.0; len];
    for (i, &s) in states.iter().enumerate() {
        if kernel.is_absorbing(s) {
            diag[i] = 1.0;
            rhs_win[i] = if s == n { 1.0 } else { 0.0 };
        } else {
            let (d, u) = (kernel.down(s), kernel.up(s));
            sub[i] = if i > 0 { d } else { 0.0 };
            sup[i] = if i + 1 < len { u } else { 0.0 };
            diag[i] = d + u;
            rhs_time[i] = 1.0;
        }
    }
    let time = thomas(&sub, &diag, &sup, rhs_time)?;
    let win = thomas(&sub, &diag, &sup, rhs_win)?;
    Ok((time, win))
}

/// Thomas algorithm for `-sub x[i-1] + diag x[i] - sup x[i+1] = rhs`.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let len = diag.len();
    let mut c = vec![0.0; len];
    let mut denom = diag[0];
    if denom.abs() < f64::MIN_POSITIVE {
        return Err(Error::Numeric("singular tridiagonal system at row 0".into()));
    }
    c[0] = -sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..len {
        denom = diag[i] + sub[i] * c[i - 1];
        if denom.abs() < f64::MIN_POSITIVE {
            return Err(Error::Numeric(format!("singular tridiagonal system at row {i}")));
        }
        c[i] = -sup[i] / denom;
        rhs[i] = (rhs[i] + sub[i] * rhs[i - 1]) / denom;
    }
    for i in (0..len - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(rhs)
}

fn solve_dense(kernel: &StepKernel) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = kernel.n();
    let first = kernel.first_state();
    let transient: Vec<usize> = kernel.states().filter(|&s| !kernel.is_absorbing(s)).collect();
    let len = transient.len();
    let mut expected = vec![0.0; n - first + 1];
    let mut win = vec![0.0; n - first + 1];
    for s in kernel.states() {
        if kernel.is_absorbing(s) && s == n {
            win[s - first] = 1.0;
        }
    }
    if len == 0 {
        return Ok((expected, win));
    }
    // A = I - Q over transient states; two right-hand sides.
    let mut a = vec![vec![0.0; len]; len];
    let mut b = vec![[1.0, 0.0]; len];
    for (i, &s) in transient.iter().enumerate() {
        let row = kernel.row(s);
        for (k, &t) in transient.iter().enumerate() {
            a[i][k] = -row.prob(t);
        }
        a[i][i] += 1.0;
        if kernel.is_absorbing(n) {
            b[i][1] = row.prob(n);
        }
    }
    for col in 0..len {
        let pivot = (col..len)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty pivot range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Numeric(format!(
                "singular absorption system at transient state {}",
                transient[col]
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for r in col + 1..len {
            let factor = a[r][col] * inv;
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(r);
            for (x, &y) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= factor * y;
            }
            b[r][0] -= factor * b[col][0];
            b[r][1] -= factor * b[col][1];
        }
    }
    let mut x = vec![[0.0, 0.0]; len];
    for i in (0..len).rev() {
        let mut acc = b[i];
        for k in i + 1..len {
            acc[0] -= a[i][k] * x[k][0];
            acc[1] -= a[i][k] * x[k][1];
        }
        x[i] = [acc[0] / a[i][i], acc[1] / a[i][i]];
    }
    for (i, &s) in transient.iter().enumerate() {
        expected[s - first] = x[i][0];
        win[s - first] = x[i][1];
    }
    Ok((expected, win))
}

/// Relative residual `max_s |x_s - rhs_s - sum_r K(s,r) x_r| / (max|x| + 1)`
/// of both systems, recomputed from the kernel.
fn absorption_residual(kernel: &StepKernel, expected: &[f64], win: &[f64]) -> f64 {
    let first = kernel.first_state();
    let n = kernel.n();
    let scale_e = expected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for s in kernel.states() {
        let (re, rw) = if kernel.is_absorbing(s) {
            let target = if s == n { 1.0 } else { 0.0 };
            (expected[s - first].abs(), (win[s - first] - target).abs())
        } else {
            let row = kernel.row(s);
            let mut ke = 0.0;
            let mut kw = 0.0;
            for (off, &p) in row.probs().iter().enumerate() {
                let r = row.start() + off;
                if p != 0.0 && r >= first {
                    ke += p * expected[r - first];
                    kw += p * win[r - first];
                }
            }
            (
                (expected[s - first] - 1.0 - ke).abs() / scale_e,
                (win[s - first] - kw).abs(),
            )
        };
        worst = worst.max(re).max(rw);
    }
    worst
}

/// `P[T > t | X_0 = s0]` for `t = 0..=t_max`.
#[derive(Clone, Debug, Serialize)]
pub struct SurvivalCurve {
    pub s0: usize,
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    /// Truncated `sum_t P[T > t]`, which approaches `E[T]` as the horizon grows.
    pub fn truncated_mean(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// One step of `v <- K_T v` where `K_T` is the kernel restricted to transient
/// states (absorbing entries are forced to zero).
fn apply_transient(kernel: &StepKernel, absorbing: &[bool], v: &[f64], out: &mut [f64]) {
    let first = kernel.first_state();
    for s in kernel.states() {
        let i = s - first;
        if absorbing[i] {
            out[i] = 0.0;
            continue;
        }
        let row = kernel.row(s);
        let mut acc = 0.0;
        for (off, &p) in row.probs().iter().enumerate() {
            let r = row.start() + off;
            if p != 0.0 && r >= first {
                acc += p * v[r - first];
            }
        }
        out[i] = acc;
    }
}

fn absorbing_mask(kernel: &StepKernel) -> Vec<bool> {
    kernel.states().map(|s| kernel.is_absorbing(s)).collect()
}

/// Survival table for every starting state at once, iterating
/// `v_{t+1} = K_T v_t` from `v_0 = 1` on transient states. Entry `[t][s - first]`
/// is `P[T > t | X_0 = s]`.
pub fn survival_table(kernel: &StepKernel, t_max: usize) -> Vec<Vec<f64>> {
    let absorbing = absorbing_mask(kernel);
    let mut v: Vec<f64> = absorbing.iter().map(|&a| if a { 0.0 } else { 1.0 }).collect();
    let mut table = Vec::with_capacity(t_max + 1);
    let mut next = vec![0.0; v.len()];
    table.push(v.clone());
    for _ in 0..t_max {
        apply_transient(kernel, &absorbing, &v, &mut next);
        std::mem::swap(&mut v, &mut next);
        table.push(v.clone());
    }
    table
}

/// Survival curve from one starting state, iterating the distribution of
/// the chain forward and recording the mass not yet absorbed.
pub fn survival(kernel: &StepKernel, s0: usize, t_max: usize) -> Result<SurvivalCurve> {
    if !kernel.states().contains(&s0) {
        return Err(Error::InvalidState(format!(
            "start {s0} outside {}..={}",
            kernel.first_state(),
            kernel.n()
        )));
    }
    let first = kernel.first_state();
    let absorbing = absorbing_mask(kernel);
    let mut dist = vec![0.0; absorbing.len()];
    if !absorbing[s0 - first] {
        dist[s0 - first] = 1.0;
    }
    let mut values = Vec::with_capacity(t_max + 1);
    values.push(dist.iter().sum());
    let mut next = vec![0.0; dist.len()];
    for _ in 0..t_max {
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in kernel.states() {
            let mass = dist[s - first];
            if mass == 0.0 {
                continue;
            }
            let row = kernel.row(s);
            for (off, &p) in row.probs().iter().enumerate() {
                let r = row.start() + off;
                if p != 0.0 && r >= first && !absorbing[r - first] {
                    next[r - first] += mass * p;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
        values.push(dist.iter().sum());
    }
    Ok(SurvivalCurve { s0, values })
}

/// Row tail vector `P[next >= d]` for `d = 0..=n+1`, accumulated from the top.
fn tail_vector(kernel: &StepKernel, s: usize) -> Vec<f64> {
    let n = kernel.n();
    let row = kernel.row(s);
    let mut tails = vec![0.0; n + 2];
    let mut acc = 0.0;
    for d in (0..=n).rev() {
        acc += row.prob(d);
        tails[d] = acc;
    }
    tails
}

/// A pair of starting states and a threshold at which an expected
/// tail inequality fails.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub s: usize,
    pub s_prime: usize,
    pub d: usize,
    pub deficit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MonotonicityVerdict {
    Pass,
    Fail(Counterexample),
}

impl MonotonicityVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, MonotonicityVerdict::Pass)
    }
}

/// Check `P[X' >= d | s] >= P[X' >= d | s'] - 1e-12` for every `s > s'` and
/// every threshold `d`.
///
/// For each `d` the states are scanned upward while tracking the largest
/// tail seen so far, which covers every pair in `O(n^2)`.
pub fn verify_state_monotonicity(kernel: &StepKernel) -> MonotonicityVerdict {
    let n = kernel.n();
    let mut best = vec![f64::NEG_INFINITY; n + 2];
    let mut best_state = vec![0usize; n + 2];
    let mut worst: Option<Counterexample> = None;
    for s in kernel.states() {
        let tails = tail_vector(kernel, s);
        for d in 0..=n {
            let deficit = best[d] - tails[d];
            if deficit > ROW_TOL && worst.as_ref().is_none_or(|w| deficit > w.deficit) {
                worst = Some(Counterexample {
                    s,
                    s_prime: best_state[d],
                    d,
                    deficit,
                });
            }
            if tails[d] > best[d] {
                best[d] = tails[d];
                best_state[d] = s;
            }
        }
    }
    match worst {
        None => MonotonicityVerdict::Pass,
        Some(c) => MonotonicityVerdict::Fail(c),
    }
}

/// Outcome of the one-step comparison of two kernels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RowDominance {
    /// Every checked row of the high kernel dominates; `max_gap` is the
    /// largest strict tail advantage (0 for identical kernels).
    Pass { max_gap: f64 },
    Fail { s: usize, d: usize, deficit: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SurvivalDominance {
    Pass { max_gap: f64 },
    Fail { s0: usize, t: usize, excess: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceVerdict {
    pub rows: RowDominance,
    pub survival: SurvivalDominance,
    pub horizon: usize,
}

impl DominanceVerdict {
    pub fn passed(&self) -> bool {
        matches!(self.rows, RowDominance::Pass { .. })
            && matches!(self.survival, SurvivalDominance::Pass { .. })
    }
}

fn check_compatible(low: &StepKernel, high: &StepKernel) -> Result<()> {
    if low.n() != high.n() || low.model() != high.model() || low.is_folded() != high.is_folded() {
        return Err(Error::InvalidArgument(format!(
            "kernels are not comparable: (n = {}, {}, folded = {}) vs (n = {}, {}, folded = {})",
            low.n(),
            low.model(),
            low.is_folded(),
            high.n(),
            high.model(),
            high.is_folded()
        )));
    }
    Ok(())
}

/// Row-CDF dominance of `high` over `low`. Plain kernels are compared on the
/// majority side `2s > n`; folded kernels on every state.
pub fn verify_row_dominance(low: &StepKernel, high: &StepKernel) -> Result<RowDominance> {
    check_compatible(low, high)?;
    let n = low.n();
    let mut max_gap = 0.0f64;
    let mut worst: Option<(usize, usize, f64)> = None;
    for s in low.states() {
        if !low.is_folded() && 2 * s <= n {
            continue;
        }
        let tl = tail_vector(low, s);
        let th = tail_vector(high, s);
        for d in 0..=n {
            let gap = th[d] - tl[d];
            max_gap = max_gap.max(gap);
            if -gap > ROW_TOL && worst.is_none_or(|w| -gap > w.2) {
                worst = Some((s, d, -gap));
            }
        }
    }
    Ok(match worst {
        None => RowDominance::Pass { max_gap },
        Some((s, d, deficit)) => RowDominance::Fail { s, d, deficit },
    })
}

/// Survival dominance `P[T_high > t | s0] <= P[T_low > t | s0] + 1e-9` for
/// every start and every `t <= t_max`.
pub fn verify_survival_dominance(
    low: &StepKernel,
    high: &StepKernel,
    t_max: usize,
) -> Result<SurvivalDominance> {
    check_compatible(low, high)?;
    let absorbing_low = absorbing_mask(low);
    let absorbing_high = absorbing_mask(high);
    let init = |mask: &[bool]| -> Vec<f64> { mask.iter().map(|&a| if a { 0.0 } else { 1.0 }).collect() };
    let mut vl = init(&absorbing_low);
    let mut vh = init(&absorbing_high);
    let mut nl = vec![0.0; vl.len()];
    let mut nh = vec![0.0; vh.len()];
    let mut max_gap = 0.0f64;
    let first = low.first_state();
    for t in 0..=t_max {
        if t > 0 {
            apply_transient(low, &absorbing_low, &vl, &mut nl);
            apply_transient(high, &absorbing_high, &vh, &mut nh);
            std::mem::swap(&mut vl, &mut nl);
            std::mem::swap(&mut vh, &mut nh);
        }
        for (i, (&l, &h)) in vl.iter().zip(&vh).enumerate() {
            let excess = h - l;
            if excess > ITERATED_TOL {
                return Ok(SurvivalDominance::Fail {
                    s0: first + i,
                    t,
                    excess,
                });
            }
            max_gap = max_gap.max(l - h);
        }
    }
    Ok(SurvivalDominance::Pass { max_gap })
}

/// Both one-step and survival-curve dominance of the `P_{j+1}` kernel
/// (`high`) over the `P_j` kernel (`low`).
pub fn verify_process_dominance(
    low: &StepKernel,
    high: &StepKernel,
    t_max: usize,
) -> Result<DominanceVerdict> {
    let rows = verify_row_dominance(low, high)?;
    let survival = verify_survival_dominance(low, high, t_max)?;
    Ok(DominanceVerdict {
        rows,
        survival,
        horizon: t_max,
    })
}

/// Largest absolute entrywise difference between two kernels' rows.
pub fn max_row_difference(a: &StepKernel, b: &StepKernel) -> Result<f64> {
    check_compatible(a, b)?;
    let mut worst = 0.0f64;
    for s in a.states() {
        let (ra, rb) = (a.row(s), b.row(s));
        let lo = ra.start().min(rb.start());
        let hi = ra.end().max(rb.end());
        for r in lo..=hi {
            worst = worst.max((ra.prob(r) - rb.prob(r)).abs());
        }
    }
    Ok(worst)
}
