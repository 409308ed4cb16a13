//! Parallel execution of an experiment grid and per-cell aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::stats::Summary;
use crate::error::{Error, Result};
use crate::simulate::{run_to_consensus, RunRecord};
use crate::types::{ModelKind, Opinion, ProcessSpec, SeedPolicy};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "MAJORITY_LAB_THREADS";

/// Worker count from [`THREADS_ENV`], defaulting to the available
/// parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |p| p.get())),
    }
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Label of a grid cell for seed derivation. Depends only on the cell's own
/// coordinates, so adding cells to a grid leaves existing ones unchanged.
pub fn cell_label(model: ModelKind, j: u32, n: u64) -> u64 {
    let m = match model {
        ModelKind::Gossip => 0,
        ModelKind::Sequential => 1,
    };
    (n << 8) ^ ((j as u64) << 1) ^ m
}

/// Seed policy of one cell.
pub fn cell_policy(master: SeedPolicy, model: ModelKind, j: u32, n: u64) -> SeedPolicy {
    master.child(cell_label(model, j, n))
}

/// `ln n` (gossip) or `n ln n` (sequential), and the base-2 counterpart.
pub fn normalizers(model: ModelKind, n: u64) -> (f64, f64) {
    let nf = n as f64;
    match model {
        ModelKind::Gossip => (nf.ln(), nf.log2()),
        ModelKind::Sequential => (nf * nf.ln(), nf * nf.log2()),
    }
}

/// Aggregates of one `(model, j, n)` cell. Step statistics cover converged
/// runs only; censored runs are counted separately.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStats {
    pub model: ModelKind,
    pub j: u32,
    pub n: u64,
    pub s0: u64,
    pub runs: u64,
    pub censored: u64,
    pub steps: Option<Summary>,
    /// Steps divided by `ln n` or `n ln n`.
    pub normalized: Option<Summary>,
    /// Steps divided by `log2 n` or `n log2 n`.
    pub normalized_log2: Option<Summary>,
    /// Fraction of converged runs won by `a`.
    pub winner_a_fraction: Option<f64>,
}

impl CellStats {
    pub fn from_records(model: ModelKind, j: u32, n: u64, records: &[RunRecord]) -> CellStats {
        let done: Vec<&RunRecord> = records.iter().filter(|r| !r.censored).collect();
        let steps: Vec<f64> = done.iter().map(|r| r.steps as f64).collect();
        let (ln_norm, log2_norm) = normalizers(model, n);
        let scaled = |d: f64| steps.iter().map(|s| s / d).collect::<Vec<_>>();
        let wins = done.iter().filter(|r| r.winner == Some(Opinion::A)).count();
        CellStats {
            model,
            j,
            n,
            s0: records.first().map_or(0, |r| r.s0),
            runs: records.len() as u64,
            censored: (records.len() - done.len()) as u64,
            steps: Summary::of(&steps),
            normalized: Summary::of(&scaled(ln_norm)),
            normalized_log2: Summary::of(&scaled(log2_norm)),
            winner_a_fraction: (!done.is_empty()).then(|| wins as f64 / done.len() as f64),
        }
    }

    /// Mean normalized (base-e) convergence time.
    pub fn normalized_mean(&self) -> Option<f64> {
        self.normalized.as_ref().map(|s| s.mean)
    }
}

/// All records of a grid plus the per-cell aggregates, both in
/// `(n, j)` order of the config lists.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellStats>,
    pub records: Vec<RunRecord>,
}

impl GridResult {
    /// Converged step counts of one cell.
    pub fn steps(&self, j: u32, n: u64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.j == j && r.n == n && !r.censored)
            .map(|r| r.steps as f64)
            .collect()
    }

    pub fn cell(&self, j: u32, n: u64) -> Option<&CellStats> {
        self.cells.iter().find(|c| c.j == j && c.n == n)
    }
}

/// Execute every `(cell, run)` task on the current rayon pool. Each task
/// depends only on its derived seed, and results are collected in task
/// order, so the output does not depend on the worker count.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;
    let master = config.policy();
    let mut cells = Vec::new();
    for &n in &config.ns {
        for &j in &config.js {
            let start = config.init.initial_state(n)?;
            cells.push((ProcessSpec::new(j)?, n, start, config.step_cap(n)));
        }
    }
    let runs = config.runs;
    let model = config.model;
    let records: Vec<RunRecord> = (0..cells.len() as u64 * runs)
        .into_par_iter()
        .map(|task| {
            let (spec, n, start, cap) = cells[(task / runs) as usize];
            let i = task % runs;
            let mut rng = cell_policy(master, model, spec.j(), n).derive_stream(i);
            let outcome = run_to_consensus(spec, model, start, &mut rng, cap, None);
            RunRecord::new(i, config.seed, spec, model, start, &outcome)
        })
        .collect();
    let stats = cells
        .iter()
        .enumerate()
        .map(|(c, (spec, n, _, _))| {
            let lo = c * runs as usize;
            CellStats::from_records(model, spec.j(), *n, &records[lo..lo + runs as usize])
        })
        .collect();
    Ok(GridResult {
        config: config.clone(),
        cells: stats,
        records,
    })
}
