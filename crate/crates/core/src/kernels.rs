//! Closed-form one-step mathematics of the j-Majority chains.
//!
//! Everything here is a pure function of the sample size, the population
//! size and the current count. The adoption curve `q(alpha)` determines both
//! models: the sequential chain is a birth-death chain with
//! `up(s) = (1 - alpha) q(alpha)` and `down(s) = alpha (1 - q(alpha))`, and a
//! gossip round moves the count to `Binomial(n, q(alpha))`.

use std::borrow::Cow;
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::types::{ModelKind, ProcessSpec};

/// Dense gossip kernels hold `(n+1)^2` entries; above this size only the
/// Monte Carlo paths are available.
pub const DENSE_KERNEL_MAX_N: usize = 4096;

/// Row-sum tolerance enforced on hand-built kernels.
pub const ROW_SUM_TOL: f64 = 1e-12;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "success probability {alpha} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Full `Binomial(m, alpha)` pmf as a vector of length `m + 1`.
///
/// Weights are grown from the mode outward with the multiplicative ratio
/// `w[k+1] / w[k] = (m - k) / (k + 1) * alpha / (1 - alpha)` and normalised
/// at the end, so no factorial or power is ever formed and every
/// intermediate stays in `(0, 1]`.
pub fn binomial_pmf_vec(m: u64, alpha: f64) -> Vec<f64> {
    let len = m as usize + 1;
    let mut w = vec![0.0; len];
    if alpha <= 0.0 {
        w[0] = 1.0;
        return w;
    }
    if alpha >= 1.0 {
        w[len - 1] = 1.0;
        return w;
    }
    let ratio = alpha / (1.0 - alpha);
    let mode = (((m + 1) as f64 * alpha).floor() as usize).min(m as usize);
    w[mode] = 1.0;
    for k in mode..m as usize {
        w[k + 1] = w[k] * ((m as usize - k) as f64 / (k + 1) as f64) * ratio;
    }
    for k in (1..=mode).rev() {
        w[k - 1] = w[k] * (k as f64 / (m as usize - k + 1) as f64) / ratio;
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

pub fn binom_pmf(m: u64, alpha: f64, k: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if k > m {
        return Err(Error::InvalidArgument(format!("count k = {k} exceeds trials m = {m}")));
    }
    Ok(binomial_pmf_vec(m, alpha)[k as usize])
}

/// `P[Bin(m, alpha) <= k]`.
pub fn binom_cdf(m: u64, alpha: f64, k: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if k > m {
        return Err(Error::InvalidArgument(format!("count k = {k} exceeds trials m = {m}")));
    }
    let pmf = binomial_pmf_vec(m, alpha);
    Ok(pmf[..=k as usize].iter().sum::<f64>().min(1.0))
}

/// `q(alpha)`: probability that an updating agent ends up with opinion `a`
/// when a fraction `alpha` of the population holds `a`.
///
/// Odd `j = 2m+1`: `P[Bin(j, alpha) >= m+1]`. Even `j = 2m`:
/// `P[Bin(j, alpha) >= m+1] + P[Bin(j, alpha) = m] / 2`.
pub fn adoption_probability(spec: ProcessSpec, alpha: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&alpha), "alpha = {alpha}");
    if alpha <= 0.0 {
        return 0.0;
    }
    if alpha >= 1.0 {
        return 1.0;
    }
    // Exact at the symmetric point for every j, so kernels of different
    // processes agree bit-for-bit there.
    if alpha == 0.5 {
        return 0.5;
    }
    let j = spec.j() as u64;
    let pmf = binomial_pmf_vec(j, alpha);
    let decisive = spec.decisive() as usize;
    // Sum whichever tail is small.
    let mut q = if alpha > 0.5 {
        1.0 - pmf[..decisive].iter().sum::<f64>()
    } else {
        pmf[decisive..].iter().sum::<f64>()
    };
    if spec.has_ties() {
        q += 0.5 * pmf[decisive - 1];
    }
    q.clamp(0.0, 1.0)
}

/// Central binomial coefficient `C(2j, j)` as a float.
fn central_binomial(j: u32) -> f64 {
    (1..=j).fold(1.0, |acc, i| acc * (j + i) as f64 / i as f64)
}

/// Signed form of the odd-minus-even adoption gap,
/// `q_{2j+1}(alpha) - q_{2j}(alpha) = (2 alpha - 1) / 2 * C(2j, j) alpha^j (1 - alpha)^j`.
///
/// Defined for every `alpha`; negative below one half, where the extra
/// draw favours `b`.
pub fn lemma7_delta_signed(j: u32, alpha: f64) -> f64 {
    let j_i = j as i32;
    (2.0 * alpha - 1.0) / 2.0 * central_binomial(j) * alpha.powi(j_i) * (1.0 - alpha).powi(j_i)
}

/// Extra probability that a `b`-agent flips to `a` under `P_{2j+1}` compared
/// with `P_{2j}`, on the majority side `alpha >= 1/2`.
pub fn lemma7_delta(j: u32, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if j == 0 {
        return Err(Error::InvalidArgument("j must be at least 1".into()));
    }
    if alpha < 0.5 {
        return Err(Error::Domain(format!(
            "alpha = {alpha} is below 1/2; the gap is stated for the majority side \
             (use lemma7_delta_signed for the extended form)"
        )));
    }
    Ok(lemma7_delta_signed(j, alpha))
}

/// One row of a kernel: probabilities of moving to `start, start+1, ...`.
#[derive(Clone, Debug)]
pub struct Row<'a> {
    start: usize,
    probs: Cow<'a, [f64]>,
}

impl Row<'_> {
    /// Row over `start, start + 1, ...` from an owned probability vector.
    pub fn owned(start: usize, probs: Vec<f64>) -> Row<'static> {
        assert!(!probs.is_empty(), "a row needs at least one entry");
        Row {
            start,
            probs: Cow::Owned(probs),
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// Last index covered by this row.
    pub fn end(&self) -> usize {
        self.start + self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, r: usize) -> f64 {
        if r < self.start {
            return 0.0;
        }
        self.probs.get(r - self.start).copied().unwrap_or(0.0)
    }

    /// `P[next <= r]`.
    pub fn cdf(&self, r: usize) -> f64 {
        if r < self.start {
            return 0.0;
        }
        let upto = (r - self.start + 1).min(self.probs.len());
        self.probs[..upto].iter().sum()
    }

    /// `P[next >= d]`, summed from the top so upper tails keep full
    /// relative precision.
    pub fn tail(&self, d: usize) -> f64 {
        if d <= self.start {
            return self.probs.iter().sum();
        }
        let from = d - self.start;
        if from >= self.probs.len() {
            return 0.0;
        }
        self.probs[from..].iter().sum()
    }

    /// Generalised inverse `min { r : P[next <= r] > u }` for `u` in `[0, 1)`.
    /// Rounding at the top end falls back to the largest support point.
    pub fn inverse_cdf(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last_support = self.start;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_support = self.start + i;
                acc += p;
                if acc > u {
                    return self.start + i;
                }
            }
        }
        last_support
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Rows {
    /// Birth-death chain; `down[i]`, `up[i]` for state `first + i`.
    Tridiagonal { down: Vec<f64>, up: Vec<f64> },
    /// Full rows of length `n + 1`, indexed by absolute next state.
    Dense(Vec<Vec<f64>>),
}

/// Exact one-step transition law of a chain on counts.
///
/// Plain kernels live on `0..=n`. Folded kernels ([`StepKernel::fold`]) live
/// on majority counts `ceil(n/2)..=n`; their only absorbing state is `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    model: ModelKind,
    spec: Option<ProcessSpec>,
    n: usize,
    first: usize,
    folded: bool,
    rows: Rows,
}

impl StepKernel {
    pub fn model(&self) -> ModelKind {
        self.model
    }

    /// The process this kernel was built from; `None` for hand-built kernels.
    pub fn spec(&self) -> Option<ProcessSpec> {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn is_tridiagonal(&self) -> bool {
        matches!(self.rows, Rows::Tridiagonal { .. })
    }

    /// Lowest state of the chain (0, or `ceil(n/2)` when folded).
    pub fn first_state(&self) -> usize {
        self.first
    }

    pub fn states(&self) -> RangeInclusive<usize> {
        self.first..=self.n
    }

    fn index(&self, s: usize) -> usize {
        assert!(
            (self.first..=self.n).contains(&s),
            "state {s} outside {}..={}",
            self.first,
            self.n
        );
        s - self.first
    }

    pub fn row(&self, s: usize) -> Row<'_> {
        let i = self.index(s);
        match &self.rows {
            Rows::Tridiagonal { down, up } => {
                let (d, u) = (down[i], up[i]);
                let stay = 1.0 - d - u;
                if s == self.first {
                    Row {
                        start: s,
                        probs: Cow::Owned(if s < self.n { vec![stay, u] } else { vec![stay] }),
                    }
                } else if s == self.n {
                    Row {
                        start: s - 1,
                        probs: Cow::Owned(vec![d, stay]),
                    }
                } else {
                    Row {
                        start: s - 1,
                        probs: Cow::Owned(vec![d, stay, u]),
                    }
                }
            }
            Rows::Dense(rows) => Row {
                start: 0,
                probs: Cow::Borrowed(&rows[i]),
            },
        }
    }

    pub fn prob(&self, s: usize, r: usize) -> f64 {
        self.row(s).prob(r)
    }

    /// Probability of `s -> s + 1`. Only meaningful for tridiagonal kernels;
    /// dense kernels report the mass on `s + 1`.
    pub fn up(&self, s: usize) -> f64 {
        match &self.rows {
            Rows::Tridiagonal { up, .. } => up[self.index(s)],
            Rows::Dense(_) => self.prob(s, s + 1),
        }
    }

    pub fn down(&self, s: usize) -> f64 {
        match &self.rows {
            Rows::Tridiagonal { down, .. } => down[self.index(s)],
            Rows::Dense(_) if s > 0 => self.prob(s, s - 1),
            Rows::Dense(_) => 0.0,
        }
    }

    pub fn stay(&self, s: usize) -> f64 {
        self.prob(s, s)
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        match &self.rows {
            Rows::Tridiagonal { down, up } => {
                let i = self.index(s);
                down[i] == 0.0 && up[i] == 0.0
            }
            Rows::Dense(rows) => rows[self.index(s)][s] >= 1.0 - 1e-15,
        }
    }

    /// Kernel of the majority-count chain `m = max(s, n - s)`.
    ///
    /// The label-symmetry `q(1 - alpha) = 1 - q(alpha)` makes this a Markov
    /// chain; absorption at `{0, n}` of the plain chain is absorption at `n`
    /// of the folded one.
    pub fn fold(&self) -> StepKernel {
        if self.folded {
            return self.clone();
        }
        let n = self.n;
        let first = n.div_ceil(2);
        let rows = match &self.rows {
            Rows::Tridiagonal { down, up } => {
                let mut f_down = Vec::with_capacity(n - first + 1);
                let mut f_up = Vec::with_capacity(n - first + 1);
                for m in first..=n {
                    let (d, u) = (down[m], up[m]);
                    if 2 * m == n {
                        // Both moves leave the balanced state for n/2 + 1.
                        f_down.push(0.0);
                        f_up.push(d + u);
                    } else if m == first && m > 0 {
                        // n odd: a down move crosses to the mirrored state.
                        f_down.push(0.0);
                        f_up.push(u);
                    } else {
                        f_down.push(d);
                        f_up.push(u);
                    }
                }
                Rows::Tridiagonal {
                    down: f_down,
                    up: f_up,
                }
            }
            Rows::Dense(rows) => Rows::Dense(
                (first..=n)
                    .map(|m| fold_dense_row(&rows[m], n))
                    .collect(),
            ),
        };
        StepKernel {
            model: self.model,
            spec: self.spec,
            n,
            first,
            folded: true,
            rows,
        }
    }

    /// Kernel from explicit dense rows over `0..=n` (for negative controls
    /// and external chains). Rows must be probability vectors.
    pub fn from_dense_rows(model: ModelKind, rows: Vec<Vec<f64>>) -> Result<StepKernel> {
        let len = rows.len();
        if len < 2 {
            return Err(Error::InvalidArgument("a kernel needs at least states 0 and 1".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            if row.len() != len {
                return Err(Error::InvalidArgument(format!(
                    "row {s} has {} entries, expected {len}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument(format!("row {s} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!("row {s} sums to {sum}")));
            }
        }
        Ok(StepKernel {
            model,
            spec: None,
            n: len - 1,
            first: 0,
            folded: false,
            rows: Rows::Dense(rows),
        })
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        self.states()
            .map(|s| (self.row(s).probs().iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn fold_dense_row(row: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for (r, &p) in row.iter().enumerate() {
        out[r.max(n - r)] += p;
    }
    out
}

/// Birth-death kernel of the sequential model.
pub fn sequential_kernel(spec: ProcessSpec, n: usize) -> Result<StepKernel> {
    if n == 0 {
        return Err(Error::InvalidArgument("population size n must be positive".into()));
    }
    let mut down = Vec::with_capacity(n + 1);
    let mut up = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let alpha = s as f64 / n as f64;
        let q = adoption_probability(spec, alpha);
        up.push((1.0 - alpha) * q);
        down.push(alpha * (1.0 - q));
    }
    Ok(StepKernel {
        model: ModelKind::Sequential,
        spec: Some(spec),
        n,
        first: 0,
        folded: false,
        rows: Rows::Tridiagonal { down, up },
    })
}

/// Gossip-model row at count `s`: the `Binomial(n, q(s/n))` pmf.
pub fn gossip_row(spec: ProcessSpec, n: usize, s: usize) -> Vec<f64> {
    let q = adoption_probability(spec, s as f64 / n as f64);
    binomial_pmf_vec(n as u64, q)
}

/// Folded gossip row at majority count `m`: law of `max(S, n - S)`.
pub fn folded_gossip_row(spec: ProcessSpec, n: usize, m: usize) -> Vec<f64> {
    fold_dense_row(&gossip_row(spec, n, m), n)
}

/// Dense kernel of the gossip model, guarded at [`DENSE_KERNEL_MAX_N`].
pub fn gossip_kernel(spec: ProcessSpec, n: usize) -> Result<StepKernel> {
    if n == 0 {
        return Err(Error::InvalidArgument("population size n must be positive".into()));
    }
    if n > DENSE_KERNEL_MAX_N {
        return Err(Error::Capacity(format!(
            "dense gossip kernel for n = {n} exceeds the limit {DENSE_KERNEL_MAX_N}; \
             use the Monte Carlo simulator instead"
        )));
    }
    let rows = (0..=n).map(|s| gossip_row(spec, n, s)).collect();
    Ok(StepKernel {
        model: ModelKind::Gossip,
        spec: Some(spec),
        n,
        first: 0,
        folded: false,
        rows: Rows::Dense(rows),
    })
}

pub fn kernel(model: ModelKind, spec: ProcessSpec, n: usize) -> Result<StepKernel> {
    match model {
        ModelKind::Sequential => sequential_kernel(spec, n),
        ModelKind::Gossip => gossip_kernel(spec, n),
    }
}

fn three_majority() -> ProcessSpec {
    ProcessSpec::new(3).expect("3 is a valid sample size")
}

/// 3-Majority sequential transition probabilities seen from a minority of
/// size `s` (real-valued so it can be evaluated at fractional states):
/// `(p_shrink, p_grow)` where the minority loses or gains one agent.
pub fn minority_moves(n: f64, s: f64) -> (f64, f64) {
    let x = s / n;
    let q = adoption_probability(three_majority(), x.clamp(0.0, 1.0));
    let shrink = x * (1.0 - q);
    let grow = (1.0 - x) * q;
    (shrink, grow)
}

/// Per-capita expected decrease of a minority of size `s` under sequential
/// 3-Majority, `(p_shrink - p_grow) / s`, evaluated from the binomial
/// transition probabilities.
pub fn drift_delta_s(n: u64, s_minority: u64) -> Result<f64> {
    if s_minority == 0 || s_minority >= n {
        return Err(Error::InvalidArgument(format!(
            "minority count {s_minority} must lie in 1..={}",
            n.saturating_sub(1)
        )));
    }
    Ok(drift_delta_real(n as f64, s_minority as f64))
}

/// [`drift_delta_s`] at a real-valued minority size.
pub fn drift_delta_real(n: f64, s: f64) -> f64 {
    let (shrink, grow) = minority_moves(n, s);
    (shrink - grow) / s
}

/// Polynomial form `(2 s^2 - 3 s n + n^2) / n^3` of the same drift.
pub fn drift_delta_closed_form(n: f64, s: f64) -> f64 {
    (2.0 * s * s - 3.0 * s * n + n * n) / (n * n * n)
}

/// Lower bound on the drift used for the extinction-time estimate of a
/// minority starting below `(1 - eps) n / 2`: `(1 + eps/2) eps / (4 n)`.
///
/// The drift at `(1 - eps) n / 2` itself is `eps (1 + eps) / (2 n)`, which is
/// at least this value for every `eps` in `(0, 1)`.
pub fn extinction_drift_bound(n: f64, eps: f64) -> f64 {
    (1.0 + eps / 2.0) * eps / (4.0 * n)
}

/// Exact drift at `s = (1 - eps) n / 2`.
pub fn drift_at_margin(n: f64, eps: f64) -> f64 {
    eps * (1.0 + eps) / (2.0 * n)
}

/// Ratio of down to up probability among productive 3-Majority steps at
/// bias `delta = s - n/2`:
/// `(1 - alpha)(1 + 2 alpha) / (alpha (3 - 2 alpha))` with `alpha = 1/2 + delta/n`.
///
/// Equals 1 at zero bias, decreases strictly and reaches 0 at consensus.
///
/// # Panics
///
/// If `delta` is outside `[0, n/2]`.
pub fn ruin_ratio(n: u64, delta: f64) -> f64 {
    let half = n as f64 / 2.0;
    assert!(
        (0.0..=half).contains(&delta),
        "bias {delta} outside [0, n/2] for n = {n}"
    );
    let alpha = 0.5 + delta / n as f64;
    (1.0 - alpha) * (1.0 + 2.0 * alpha) / (alpha * (3.0 - 2.0 * alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(j: u32) -> ProcessSpec {
        ProcessSpec::new(j).unwrap()
    }

    /// Enumerate all 2^j ordered samples with their weights and apply the
    /// majority rule literally.
    fn adoption_by_enumeration(j: u32, alpha: f64) -> f64 {
        let mut q = 0.0;
        for mask in 0u64..(1u64 << j) {
            let a = mask.count_ones();
            let b = j - a;
            let w = alpha.powi(a as i32) * (1.0 - alpha).powi(b as i32);
            if a > b {
                q += w;
            } else if a == b {
                q += 0.5 * w;
            }
        }
        q
    }

    /// Count the 2^m outcomes by number of successes, then weight each class.
    fn cdf_by_enumeration(m: u32, alpha: f64, k: u32) -> f64 {
        let mut classes = vec![0u64; m as usize + 1];
        for mask in 0u64..(1u64 << m) {
            classes[mask.count_ones() as usize] += 1;
        }
        (0..=k)
            .map(|a| classes[a as usize] as f64 * alpha.powi(a as i32) * (1.0 - alpha).powi((m - a) as i32))
            .sum()
    }

    #[test]
    fn binomial_examples() {
        assert!((binom_pmf(3, 0.5, 2).unwrap() - 0.375).abs() < 1e-15);
        let oracle = cdf_by_enumeration(3, 0.6, 1);
        assert!((oracle - 0.352).abs() < 1e-15);
        assert!((binom_cdf(3, 0.6, 1).unwrap() - oracle).abs() < 1e-15);
        for m in [0, 1, 7, 64] {
            assert_eq!(binom_pmf(m, 0.0, 0).unwrap(), 1.0);
        }
        assert!(binom_pmf(3, 0.5, 4).is_err());
        assert!(binom_cdf(3, 1.5, 1).is_err());
        assert!(binom_cdf(3, f64::NAN, 1).is_err());
    }

    #[test]
    fn binomial_matches_enumeration() {
        for m in [1u32, 2, 5, 9, 14] {
            for &alpha in &[0.01, 0.3, 0.5, 0.77, 0.999] {
                for k in 0..=m {
                    let got = binom_cdf(m as u64, alpha, k as u64).unwrap();
                    let want = cdf_by_enumeration(m, alpha, k);
                    assert!((got - want).abs() < 1e-14, "m={m} a={alpha} k={k}");
                }
            }
        }
    }

    #[test]
    fn binomial_large_m_against_log_gamma() {
        // Independent route: pmf via ln C(m, k) accumulated as a sum of logs.
        let m = 64u64;
        for &alpha in &[0.03, 0.41, 0.5, 0.93] {
            let pmf = binomial_pmf_vec(m, alpha);
            let mut ln_c = 0.0f64;
            for k in 0..=m {
                if k > 0 {
                    ln_c += ((m - k + 1) as f64).ln() - (k as f64).ln();
                }
                let want = (ln_c + k as f64 * alpha.ln() + (m - k) as f64 * (1.0 - alpha).ln()).exp();
                assert!((pmf[k as usize] - want).abs() < 1e-14, "k={k} a={alpha}");
            }
        }
    }

    #[test]
    fn adoption_examples() {
        assert!((adoption_probability(p(1), 0.6) - 0.6).abs() < 1e-15);
        assert!((adoption_probability(p(3), 0.6) - 0.648).abs() < 1e-15);
        assert!((adoption_probability(p(4), 0.6) - 0.648).abs() < 1e-15);
        assert!((adoption_probability(p(5), 0.6) - 0.68256).abs() < 1e-15);
        let gap = adoption_probability(p(5), 0.6) - adoption_probability(p(4), 0.6);
        assert!((gap - 0.03456).abs() < 1e-15);
    }

    #[test]
    fn adoption_matches_enumeration() {
        for j in 1..=12 {
            for i in 0..=40 {
                let alpha = i as f64 / 40.0;
                let got = adoption_probability(p(j), alpha);
                let want = adoption_by_enumeration(j, alpha);
                assert!((got - want).abs() < 1e-13, "j={j} alpha={alpha}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn adoption_curve_endpoints() {
        for j in 1..=MAX_J_TESTED {
            assert_eq!(adoption_probability(p(j), 0.0), 0.0);
            assert_eq!(adoption_probability(p(j), 1.0), 1.0);
            assert_eq!(adoption_probability(p(j), 0.5), 0.5);
        }
    }

    const MAX_J_TESTED: u32 = 64;

    #[test]
    fn lemma7_examples() {
        assert!((lemma7_delta(1, 0.6).unwrap() - 0.048).abs() < 1e-15);
        assert_eq!(lemma7_delta(2, 0.5).unwrap(), 0.0);
        assert!((lemma7_delta(2, 0.6).unwrap() - 0.03456).abs() < 1e-15);
        assert!(matches!(lemma7_delta(2, 0.4), Err(Error::Domain(_))));
        assert!(lemma7_delta_signed(2, 0.4) < 0.0);
    }

    #[test]
    fn sequential_kernel_examples() {
        let k = sequential_kernel(p(3), 10).unwrap();
        assert!((k.up(6) - 0.2592).abs() < 1e-15);
        assert!((k.down(6) - 0.2112).abs() < 1e-15);
        assert!((k.stay(6) - 0.5296).abs() < 1e-15);
        assert!(k.is_absorbing(10) && k.is_absorbing(0));
        assert_eq!(k.stay(10), 1.0);

        let k = sequential_kernel(p(1), 2).unwrap();
        assert!((k.up(1) - 0.25).abs() < 1e-15);
        assert!((k.down(1) - 0.25).abs() < 1e-15);
        assert!((k.stay(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gossip_kernel_examples() {
        let k = gossip_kernel(p(3), 2).unwrap();
        let row = k.row(1);
        for (got, want) in row.probs().iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        let k4 = gossip_kernel(p(3), 4).unwrap();
        assert_eq!(k4.prob(0, 0), 1.0);
        let q = adoption_probability(p(3), 0.75);
        assert!((q - 0.84375).abs() < 1e-15);
        let want = binomial_pmf_vec(4, 0.84375);
        assert_eq!(k4.row(3).probs(), &want[..]);
        assert!(matches!(
            gossip_kernel(p(3), DENSE_KERNEL_MAX_N + 1),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn kernel_rows_are_distributions() {
        for j in [1, 2, 3, 7, 12] {
            for n in [1, 2, 3, 10, 33] {
                let seq = sequential_kernel(p(j), n).unwrap();
                let gos = gossip_kernel(p(j), n).unwrap();
                for k in [&seq, &gos, &seq.fold(), &gos.fold()] {
                    assert!(k.max_row_sum_error() <= 1e-12);
                }
                for s in 0..=n {
                    let row = seq.row(s);
                    assert!(row.start() + 1 >= s && row.end() <= s + 1);
                }
            }
        }
    }

    #[test]
    fn folded_sequential_boundaries() {
        // Even n: the balanced state can only move up.
        let k = sequential_kernel(p(3), 10).unwrap();
        let f = k.fold();
        assert_eq!(f.first_state(), 5);
        assert_eq!(f.down(5), 0.0);
        assert!((f.up(5) - (k.up(5) + k.down(5))).abs() < 1e-16);
        assert_eq!(f.up(7), k.up(7));
        assert!(f.is_absorbing(10));
        // Odd n: crossing the middle keeps the majority count.
        let k = sequential_kernel(p(3), 11).unwrap();
        let f = k.fold();
        assert_eq!(f.first_state(), 6);
        assert_eq!(f.down(6), 0.0);
        assert!((f.stay(6) - (k.stay(6) + k.down(6))).abs() < 1e-16);
    }

    #[test]
    fn inverse_cdf_edges() {
        let k = sequential_kernel(p(4), 10).unwrap();
        let row = k.row(6);
        assert_eq!(row.inverse_cdf(0.0), 5);
        assert_eq!(row.inverse_cdf(1.0 - 1e-17), 7);
        let gk = gossip_kernel(p(2), 6).unwrap();
        assert_eq!(gk.row(3).inverse_cdf(0.0), 0);
        assert_eq!(gk.row(6).inverse_cdf(0.3), 6);
    }

    #[test]
    fn drift_examples() {
        let d = drift_delta_s(10, 3).unwrap();
        assert!((d - 0.028).abs() < 1e-15);
        let (shrink, grow) = minority_moves(10.0, 3.0);
        assert!((shrink - 0.2352).abs() < 1e-15);
        assert!((grow - 0.1512).abs() < 1e-15);
        assert!((3.0 * d - (shrink - grow)).abs() < 1e-15);
        assert!(drift_delta_s(10, 5).unwrap().abs() < 1e-15);
        let step = drift_delta_s(10, 4).unwrap() - drift_delta_s(10, 3).unwrap();
        assert!((step - (4.0 * 4.0 - 30.0 - 2.0) / 1000.0).abs() < 1e-15);
        assert!((step + 0.016).abs() < 1e-15);
        assert!(drift_delta_s(10, 0).is_err());
        assert!(drift_delta_s(10, 10).is_err());
    }

    #[test]
    fn drift_at_margin_and_bound() {
        for i in 1..50 {
            let eps = i as f64 / 50.0;
            let n = 1000.0;
            let s = (1.0 - eps) * n / 2.0;
            let direct = drift_delta_real(n, s);
            assert!((direct - drift_at_margin(n, eps)).abs() < 1e-14, "eps={eps}");
            assert!(extinction_drift_bound(n, eps) <= direct);
        }
    }

    #[test]
    fn ruin_ratio_examples() {
        assert_eq!(ruin_ratio(10, 0.0), 1.0);
        let k = sequential_kernel(p(3), 10).unwrap();
        let from_kernel = k.down(6) / k.up(6);
        assert!((ruin_ratio(10, 1.0) - from_kernel).abs() < 1e-14);
        assert!((ruin_ratio(10, 1.0) - 0.814_814_814_814_814_8).abs() < 1e-12);
        assert_eq!(ruin_ratio(10, 5.0), 0.0);
    }

    proptest! {
        #[test]
        fn odd_even_pairs_share_adoption(j in 1u32..=32, alpha in 0.0f64..=1.0) {
            let odd = adoption_probability(p(2 * j - 1), alpha);
            let even = adoption_probability(p(2 * j), alpha);
            prop_assert!((odd - even).abs() <= 1e-12);
        }

        #[test]
        fn extra_draw_gap_is_closed_form(j in 1u32..=31, alpha in 0.0f64..=1.0) {
            let gap = adoption_probability(p(2 * j + 1), alpha) - adoption_probability(p(2 * j), alpha);
            prop_assert!((gap - lemma7_delta_signed(j, alpha)).abs() <= 1e-12);
        }

        #[test]
        fn adoption_is_monotone_and_symmetric(j in 1u32..=20, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let spec = p(j);
            prop_assert!(adoption_probability(spec, lo) <= adoption_probability(spec, hi) + 1e-15);
            let sym = adoption_probability(spec, a) + adoption_probability(spec, 1.0 - a);
            prop_assert!((sym - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn drift_closed_form_agrees(n in 2u64..2000, frac in 0.0f64..1.0) {
            let s = 1 + ((n - 2) as f64 * frac) as u64;
            let direct = drift_delta_s(n, s).unwrap();
            prop_assert!((direct - drift_delta_closed_form(n as f64, s as f64)).abs() <= 1e-14);
        }

        #[test]
        fn ruin_ratio_decreases(n in 2u64..10_000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let half = n as f64 / 2.0;
            let (lo, hi) = if a < b { (a * half, b * half) } else { (b * half, a * half) };
            prop_assume!(hi - lo > 1e-9 * half);
            prop_assert!(ruin_ratio(n, hi) < ruin_ratio(n, lo));
            if hi > 0.0 {
                prop_assert!(ruin_ratio(n, hi) < 1.0);
            }
        }
    }
}
