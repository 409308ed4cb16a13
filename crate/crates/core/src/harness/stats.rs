//! Descriptive statistics and the two hypothesis tests used on run data.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Count, moments, extremes and quartiles `[min, q1, median, q3, max]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub quartiles: [f64; 5],
}

impl Summary {
    /// `None` for empty data.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let count = sorted.len();
        let mean = sorted.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let quartiles = [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile_sorted(&sorted, p));
        Some(Summary {
            count,
            mean,
            sd,
            min: sorted[0],
            max: sorted[count - 1],
            quartiles,
        })
    }

    pub fn standard_error(&self) -> f64 {
        self.sd / (self.count as f64).sqrt()
    }
}

/// Mann-Whitney rank-sum test of two independent samples, normal
/// approximation with tie correction and continuity correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankTest {
    /// `U` statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_two_sided: f64,
    /// Evidence that the first sample tends to be larger.
    pub p_greater: f64,
    /// Evidence that the first sample tends to be smaller.
    pub p_less: f64,
}

pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<RankTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("rank test needs two non-empty samples".into()));
    }
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = all.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < total {
        let mut k = i;
        while k + 1 < total && all[k + 1].0 == all[i].0 {
            k += 1;
        }
        let avg_rank = (i + k) as f64 / 2.0 + 1.0;
        let t = (k - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += avg_rank * all[i..=k].iter().filter(|e| e.1).count() as f64;
        i = k + 1;
    }
    let n = total as f64;
    let u = rank_sum_x - nx * (nx + 1.0) / 2.0;
    let mean = nx * ny / 2.0;
    let var = nx * ny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(RankTest {
            u,
            z: 0.0,
            p_two_sided: 1.0,
            p_greater: 1.0,
            p_less: 1.0,
        });
    }
    let sd = var.sqrt();
    let normal = Normal::standard();
    let diff = u - mean;
    let z = diff / sd;
    let z_two = (diff.abs() - 0.5).max(0.0) / sd;
    Ok(RankTest {
        u,
        z,
        p_two_sided: (2.0 * normal.sf(z_two)).min(1.0),
        p_greater: normal.sf((diff - 0.5) / sd),
        p_less: normal.cdf((diff + 0.5) / sd),
    })
}

/// Pearson goodness-of-fit result.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
/// Adjacent cells are merged left to right until each expected count is at
/// least 5 (the last group absorbs any remainder).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GoodnessOfFit> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty count and probability vectors (got {} and {})",
            observed.len(),
            probs.len()
        )));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        o_acc += o as f64;
        e_acc += p * total as f64;
        if e_acc >= 5.0 {
            groups.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if o_acc > 0.0 || e_acc > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => groups.push((o_acc, e_acc)),
        }
    }
    if groups.len() < 2 {
        return Ok(GoodnessOfFit {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let statistic: f64 = groups.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = groups.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_se(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
