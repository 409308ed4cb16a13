//! Exact (non-random) checks: adoption-curve identities, kernel order
//! properties, drift and ratio formulas, and the hitting-time hierarchy at
//! small `n`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::chain::{
    default_horizon, expected_absorption, max_row_difference, verify_row_dominance,
    verify_state_monotonicity, verify_survival_dominance, MonotonicityVerdict, RowDominance,
    SurvivalDominance, ITERATED_TOL, ROW_TOL,
};
use crate::error::{Error, Result};
use crate::kernels::{
    adoption_probability, drift_at_margin, drift_delta_closed_form, drift_delta_real,
    drift_delta_s, extinction_drift_bound, kernel, lemma7_delta_signed, ruin_ratio,
};
use crate::types::{ModelKind, ProcessSpec};

/// Absolute tolerance of the closed-form adoption identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Absolute tolerance of the drift formulas.
pub const DRIFT_TOL: f64 = 1e-14;
/// Relative tolerance for equal expected hitting times.
pub const HITTING_REL_TOL: f64 = 1e-9;

const MODELS: [ModelKind; 2] = [ModelKind::Sequential, ModelKind::Gossip];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactCheck {
    /// Row tails are monotone in the state, both models.
    Lemma5,
    /// Odd-minus-even adoption gap matches its closed form.
    Lemma7,
    /// `P_{2j+1}` rows dominate `P_{2j}` rows.
    Lemma8,
    /// `q_{2j-1} = q_{2j}`.
    Lemma9,
    /// `P_{2j-1}` and `P_{2j}` kernels coincide.
    Lemma10,
    /// Gossip monotonicity and dominance, the coupling preconditions.
    Lemma11,
    Drift,
    Ratio,
}

impl ExactCheck {
    pub const ALL: [ExactCheck; 8] = [
        ExactCheck::Lemma5,
        ExactCheck::Lemma7,
        ExactCheck::Lemma8,
        ExactCheck::Lemma9,
        ExactCheck::Lemma10,
        ExactCheck::Lemma11,
        ExactCheck::Drift,
        ExactCheck::Ratio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExactCheck::Lemma5 => "lemma5",
            ExactCheck::Lemma7 => "lemma7",
            ExactCheck::Lemma8 => "lemma8",
            ExactCheck::Lemma9 => "lemma9",
            ExactCheck::Lemma10 => "lemma10",
            ExactCheck::Lemma11 => "lemma11",
            ExactCheck::Drift => "drift",
            ExactCheck::Ratio => "ratio",
        }
    }
}

impl fmt::Display for ExactCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExactCheck {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExactCheck::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check {s:?}")))
    }
}

/// Ranges covered by the exact checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactParams {
    pub j_max: u32,
    pub n_max: usize,
    /// Points of the alpha grid on `[0, 1]` (also used for the eps and bias grids).
    pub grid_resolution: usize,
    /// Largest `n` for the drift closed-form sweep.
    pub drift_n_max: u64,
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams {
            j_max: 12,
            n_max: 64,
            grid_resolution: 1000,
            drift_n_max: 1000,
        }
    }
}

/// One line of a check report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckItem {
    pub label: String,
    pub passed: bool,
    /// Largest violation or error observed (0 when nothing to report).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckItem {
    fn from_error(label: String, worst: f64, tolerance: f64, detail: String) -> Self {
        CheckItem {
            label,
            passed: worst <= tolerance,
            worst,
            tolerance,
            detail,
        }
    }
}

impl fmt::Display for CheckItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} (worst {:.3e}, tol {:.0e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.label,
            self.worst,
            self.tolerance,
            if self.detail.is_empty() { String::new() } else { format!(": {}", self.detail) }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

fn alpha_grid(points: usize) -> impl Iterator<Item = f64> {
    let last = points.max(2) - 1;
    (0..=last).map(move |i| i as f64 / last as f64)
}

fn spec(j: u32) -> Result<ProcessSpec> {
    ProcessSpec::new(j)
}

/// Run one exact check.
pub fn run_check(check: ExactCheck, params: &ExactParams) -> Result<CheckReport> {
    let items = match check {
        ExactCheck::Lemma5 => monotonicity_items(&MODELS, params)?,
        ExactCheck::Lemma7 => lemma7_items(params)?,
        ExactCheck::Lemma8 => dominance_items(&MODELS, params)?,
        ExactCheck::Lemma9 => lemma9_items(params)?,
        ExactCheck::Lemma10 => identity_items(params)?,
        ExactCheck::Lemma11 => {
            let mut items = monotonicity_items(&[ModelKind::Gossip], params)?;
            items.extend(dominance_items(&[ModelKind::Gossip], params)?);
            items
        }
        ExactCheck::Drift => drift_items(params)?,
        ExactCheck::Ratio => ratio_items(params),
    };
    Ok(CheckReport {
        check: check.to_string(),
        items,
    })
}

fn lemma7_items(params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for j in 1..=params.j_max {
        let (even, odd) = (spec(2 * j)?, spec(2 * j + 1)?);
        let (mut worst, mut at) = (0.0f64, 0.0);
        for a in alpha_grid(params.grid_resolution) {
            let err = (adoption_probability(odd, a) - adoption_probability(even, a) - lemma7_delta_signed(j, a)).abs();
            if err > worst {
                worst = err;
                at = a;
            }
        }
        items.push(CheckItem::from_error(
            format!("q_{} - q_{} gap closed form", 2 * j + 1, 2 * j),
            worst,
            IDENTITY_TOL,
            if worst > 0.0 { format!("at alpha = {at}") } else { String::new() },
        ));
    }
    Ok(items)
}

fn lemma9_items(params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for j in 1..=params.j_max {
        let (odd, even) = (spec(2 * j - 1)?, spec(2 * j)?);
        let worst = alpha_grid(params.grid_resolution)
            .map(|a| (adoption_probability(odd, a) - adoption_probability(even, a)).abs())
            .fold(0.0, f64::max);
        items.push(CheckItem::from_error(
            format!("q_{} = q_{}", 2 * j - 1, 2 * j),
            worst,
            IDENTITY_TOL,
            String::new(),
        ));
    }
    Ok(items)
}

fn monotonicity_items(models: &[ModelKind], params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for &model in models {
        for j in 1..=params.j_max {
            let mut failure: Option<String> = None;
            let mut worst = 0.0f64;
            for n in 1..=params.n_max {
                let raw = kernel(model, spec(j)?, n)?;
                let folded = raw.fold();
                for (name, k) in [("raw", &raw), ("folded", &folded)] {
                    if let MonotonicityVerdict::Fail(c) = verify_state_monotonicity(k) {
                        if c.deficit > worst {
                            worst = c.deficit;
                            failure = Some(format!("{name} n = {n}: {c:?}"));
                        }
                    }
                }
            }
            items.push(CheckItem {
                label: format!("{model} P_{j} tails monotone in s, n <= {}", params.n_max),
                passed: failure.is_none(),
                worst,
                tolerance: ROW_TOL,
                detail: failure.unwrap_or_default(),
            });
        }
    }
    Ok(items)
}

fn dominance_items(models: &[ModelKind], params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for &model in models {
        for even in (2..=params.j_max).step_by(2) {
            let mut failure: Option<String> = None;
            let mut worst = 0.0f64;
            for n in 1..=params.n_max {
                let low = kernel(model, spec(even)?, n)?;
                let high = kernel(model, spec(even + 1)?, n)?;
                for (name, l, h) in [("raw", low.clone(), high.clone()), ("folded", low.fold(), high.fold())] {
                    if let RowDominance::Fail { s, d, deficit } = verify_row_dominance(&l, &h)? {
                        if deficit > worst {
                            worst = deficit;
                            failure = Some(format!("{name} n = {n}, s = {s}, d = {d}"));
                        }
                    }
                }
            }
            items.push(CheckItem {
                label: format!("{model} P_{} rows dominate P_{even}, n <= {}", even + 1, params.n_max),
                passed: failure.is_none(),
                worst,
                tolerance: ROW_TOL,
                detail: failure.unwrap_or_default(),
            });
        }
    }
    Ok(items)
}

fn identity_items(params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for model in MODELS {
        for odd in (1..=params.j_max).step_by(2) {
            let mut worst = 0.0f64;
            for n in 1..=params.n_max {
                let a = kernel(model, spec(odd)?, n)?;
                let b = kernel(model, spec(odd + 1)?, n)?;
                worst = worst.max(max_row_difference(&a, &b)?);
            }
            items.push(CheckItem::from_error(
                format!("{model} P_{odd} and P_{} rows identical, n <= {}", odd + 1, params.n_max),
                worst,
                ROW_TOL,
                String::new(),
            ));
        }
    }
    Ok(items)
}

fn drift_items(params: &ExactParams) -> Result<Vec<CheckItem>> {
    let mut worst = 0.0f64;
    let mut at = (0, 0);
    for n in 2..=params.drift_n_max {
        for s in 1..n {
            let err = (drift_delta_s(n, s)? - drift_delta_closed_form(n as f64, s as f64)).abs();
            if err > worst {
                worst = err;
                at = (n, s);
            }
        }
    }
    let mut items = vec![CheckItem::from_error(
        format!("delta_s = (2s^2 - 3sn + n^2)/n^3, n <= {}", params.drift_n_max),
        worst,
        DRIFT_TOL,
        if worst > 0.0 { format!("worst at (n, s) = {at:?}") } else { String::new() },
    )];
    // Margin values on an eps grid strictly inside (0, 1).
    let eps_grid: Vec<f64> = alpha_grid(params.grid_resolution + 2)
        .filter(|&e| e > 0.0 && e < 1.0)
        .collect();
    let ns = [10.0, 100.0, 1000.0, 10_000.0];
    let margin = |f: &dyn Fn(f64, f64) -> f64| {
        let mut worst = (0.0f64, 0.0, 0.0);
        for &n in &ns {
            for &e in &eps_grid {
                let err = (drift_delta_real(n, (1.0 - e) * n / 2.0) - f(n, e)).abs();
                if err > worst.0 {
                    worst = (err, n, e);
                }
            }
        }
        worst
    };
    let printed = margin(&extinction_drift_bound);
    items.push(CheckItem::from_error(
        "delta at (1 - eps) n/2 = (1 + eps/2) eps / (4n)".into(),
        printed.0,
        DRIFT_TOL,
        format!("worst at n = {}, eps = {}", printed.1, printed.2),
    ));
    let exact = margin(&drift_at_margin);
    items.push(CheckItem::from_error(
        "delta at (1 - eps) n/2 = eps (1 + eps) / (2n)".into(),
        exact.0,
        DRIFT_TOL,
        String::new(),
    ));
    let mut below = 0.0f64;
    for &n in &ns {
        for &e in &eps_grid {
            below = below.max(extinction_drift_bound(n, e) - drift_delta_real(n, (1.0 - e) * n / 2.0));
        }
    }
    items.push(CheckItem::from_error(
        "(1 + eps/2) eps / (4n) bounds the margin drift from below".into(),
        below.max(0.0),
        DRIFT_TOL,
        String::new(),
    ));
    Ok(items)
}

fn ratio_items(params: &ExactParams) -> Vec<CheckItem> {
    let mut items = Vec::new();
    for n in [10u64, 100, 1000, 10_000, 100_000] {
        let at_zero = (ruin_ratio(n, 0.0) - 1.0).abs();
        let points = params.grid_resolution.max(2);
        let deltas: Vec<f64> = (0..points).map(|i| i as f64 * (n as f64 / 2.0) / (points - 1) as f64).collect();
        let values: Vec<f64> = deltas.iter().map(|&d| ruin_ratio(n, d)).collect();
        let non_decrease = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let above_one = values[1..].iter().map(|v| v - 1.0).fold(f64::NEG_INFINITY, f64::max);
        items.push(CheckItem::from_error(format!("n = {n}: ratio(0) = 1"), at_zero, IDENTITY_TOL, String::new()));
        items.push(CheckItem {
            label: format!("n = {n}: strictly decreasing in the bias"),
            passed: non_decrease < 0.0,
            worst: non_decrease.max(0.0),
            tolerance: 0.0,
            detail: String::new(),
        });
        items.push(CheckItem {
            label: format!("n = {n}: below 1 for positive bias"),
            passed: above_one < 0.0,
            worst: above_one.max(0.0),
            tolerance: 0.0,
            detail: String::new(),
        });
    }
    items
}

/// The hitting-time hierarchy at small `n` for one model: equal expected
/// times within each tie pair `(2j+1, 2j+2)`, improvement from `2j` to
/// `2j+1`, and survival-curve dominance along every step of the chain
/// `P_2, P_3, ..., P_{2 j_max + 2}`, for every initial state.
pub fn hierarchy_items(model: ModelKind, ns: &[usize], j_max: u32) -> Result<Vec<CheckItem>> {
    let mut items = Vec::new();
    for &n in ns {
        let horizon = default_horizon(model, n);
        let kernels = (2..=2 * j_max + 2)
            .map(|k| Ok((k, kernel(model, spec(k)?, n)?)))
            .collect::<Result<Vec<_>>>()?;
        let times = kernels
            .iter()
            .map(|(_, k)| expected_absorption(k).map(|p| p.expected))
            .collect::<Result<Vec<_>>>()?;
        let idx = |k: u32| (k - 2) as usize;
        for j in 1..=j_max {
            let (e2, e3, e4) = (&times[idx(2 * j)], &times[idx(2 * j + 1)], &times[idx(2 * j + 2)]);
            let tie = e3
                .iter()
                .zip(e4)
                .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            items.push(CheckItem::from_error(
                format!("{model} n = {n}: E[T_{}] = E[T_{}]", 2 * j + 2, 2 * j + 1),
                tie,
                HITTING_REL_TOL,
                String::new(),
            ));
            let excess = e3.iter().zip(e2).map(|(hi, lo)| hi - lo).fold(f64::NEG_INFINITY, f64::max);
            items.push(CheckItem::from_error(
                format!("{model} n = {n}: E[T_{}] <= E[T_{}]", 2 * j + 1, 2 * j),
                excess.max(0.0),
                ITERATED_TOL,
                String::new(),
            ));
        }
        for pair in kernels.windows(2) {
            let ((kl, low), (kh, high)) = (&pair[0], &pair[1]);
            let verdict = verify_survival_dominance(low, high, horizon)?;
            let (worst, detail) = match verdict {
                SurvivalDominance::Pass { .. } => (0.0, String::new()),
                SurvivalDominance::Fail { s0, t, excess } => (excess, format!("s0 = {s0}, t = {t}")),
            };
            items.push(CheckItem {
                label: format!("{model} n = {n}: P[T_{kh} > t] <= P[T_{kl} > t], t <= {horizon}"),
                passed: matches!(verdict, SurvivalDominance::Pass { .. }),
                worst,
                tolerance: ITERATED_TOL,
                detail,
            });
        }
    }
    Ok(items)
}
