use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use majority_lab::chain::{default_horizon, expected_absorption, survival};
use majority_lab::coupling::run_coupled_batch;
use majority_lab::harness::config::parse_list;
use majority_lab::harness::output::{
    cells_from_records, ensure_dir, read_runs_csv, write_csv, write_json, write_kernel_csv,
    write_profile_csv, write_runs_csv, write_survival_csv, write_trace_csv,
};
use majority_lab::harness::{
    check_bias_doubling, check_drift_tail, check_majority_preservation, emit_plot_data,
    hierarchy_items, run_check, run_grid, with_pool, worker_count, CheckItem, ExactCheck,
    ExactParams, ExperimentConfig, GridResult, InitRule,
};
use majority_lab::kernels::kernel;
use majority_lab::simulate::{default_step_cap, DEFAULT_CAP_MULTIPLIER};
use majority_lab::{Error, ModelKind, ProcessSpec, SeedPolicy};

/// Exit code for a failed check or a dominance violation. Usage and I/O
/// errors exit with 1.
const EXIT_CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "majority-lab", version, about = "j-Majority consensus: exact analysis and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of one or more (j, n) cells.
    Simulate(SimulateArgs),
    /// Exact checks on adoption curves and kernels, or exact hitting times.
    Exact(ExactArgs),
    /// Coupled runs of P_j and P_{j+1}; fails on any dominance violation.
    Couple(CoupleArgs),
    /// Run an experiment grid described by a config file.
    Grid(GridArgs),
    /// Turn a grid's runs.csv into plot data.
    Plots(PlotsArgs),
    /// Majority preservation, bias doubling and drift-tail checks for 3-Majority.
    Theorem2(Theorem2Args),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: ModelKind,
    /// Sample size; a list such as `3,4` or `3..8` runs several cells.
    #[arg(long)]
    j: String,
    #[arg(long)]
    n: String,
    #[arg(long, default_value_t = 100)]
    runs: u64,
    /// balanced, bias:ZETA or count:S0.
    #[arg(long, default_value = "balanced")]
    init: InitRule,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Cap per run, in units of n ln n interactions or ln n rounds.
    #[arg(long, default_value_t = DEFAULT_CAP_MULTIPLIER)]
    step_cap: f64,
}

#[derive(Args)]
struct ExactArgs {
    /// Check to run (repeatable), or `all`.
    #[arg(long)]
    check: Vec<String>,
    #[arg(long, default_value_t = 12)]
    j_max: u32,
    #[arg(long, default_value_t = 64)]
    n_max: usize,
    #[arg(long, default_value_t = 1000)]
    grid_resolution: usize,
    /// Largest n of the drift closed-form sweep.
    #[arg(long, default_value_t = 1000)]
    drift_n_max: u64,
    /// Write expected absorption times and win probabilities.
    #[arg(long)]
    hitting_times: bool,
    /// Check the hitting-time hierarchy for every n in `--ns` and j up to `--hierarchy-j`.
    #[arg(long)]
    hierarchy: bool,
    #[arg(long, default_value = "4,8,16,32,64")]
    ns: String,
    #[arg(long, default_value_t = 3)]
    hierarchy_j: u32,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    j: Option<u32>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the survival curve from this start.
    #[arg(long)]
    survival_s0: Option<usize>,
    /// Survival horizon (default 10 n ln n steps or 10 ln n rounds).
    #[arg(long)]
    horizon: Option<usize>,
    /// Dump the transition kernel as CSV.
    #[arg(long)]
    kernel_out: Option<PathBuf>,
}

#[derive(Args)]
struct CoupleArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    j_low: u32,
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Starting states, each balanced, bias:ZETA or count:S0 (repeatable).
    #[arg(long, default_value = "balanced")]
    init: Vec<InitRule>,
    /// Keep step-by-step traces of this many runs per start.
    #[arg(long, default_value_t = 0)]
    traces: u64,
    #[arg(long, default_value_t = DEFAULT_CAP_MULTIPLIER)]
    step_cap: f64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    j: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    init: Option<InitRule>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    step_cap: Option<f64>,
}

#[derive(Args)]
struct PlotsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Theorem2Args {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 1.0)]
    zeta: f64,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sequential")]
    model: ModelKind,
    #[arg(long, default_value_t = 3)]
    j: u32,
    /// Required fraction of runs won by the initial majority.
    #[arg(long, default_value_t = 0.99)]
    min_preserved: f64,
    /// Also run the minority-extinction tail check with this eps.
    #[arg(long)]
    drift_eps: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    drift_r: f64,
    /// Write all reports as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

type CmdResult = Result<bool, Error>;

fn dispatch(command: Command) -> CmdResult {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Exact(a) => exact(a),
        Command::Couple(a) => couple(a),
        Command::Grid(a) => grid(a),
        Command::Plots(a) => plots(a),
        Command::Theorem2(a) => theorem2(a),
    }
}

fn exit_code(result: &CmdResult) -> u8 {
    match result {
        Ok(true) => 0,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = worker_count().and_then(|threads| with_pool(threads, move || dispatch(cli.command))).and_then(|r| r);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result))
}

fn write_grid(result: &GridResult, out: &Path) -> Result<(), Error> {
    ensure_dir(out)?;
    write_runs_csv(&out.join("runs.csv"), &result.records)?;
    write_json(&out.join("cells.json"), "cells", &result.cells)?;
    write_json(&out.join("config.json"), "config", &result.config)?;
    for c in &result.cells {
        let mean = c.normalized_mean().map_or("-".into(), |m| format!("{m:.4}"));
        println!(
            "{} j={} n={} runs={} censored={} normalized_mean={} winner_a={}",
            c.model,
            c.j,
            c.n,
            c.runs,
            c.censored,
            mean,
            c.winner_a_fraction.map_or("-".into(), |w| format!("{w:.3}"))
        );
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let mut cfg = ExperimentConfig::new(a.model, parse_list(&a.j)?, parse_list(&a.n)?, a.runs);
    cfg.init = a.init;
    cfg.seed = a.seed;
    cfg.step_cap_multiplier = a.step_cap;
    cfg.out = Some(a.out.clone());
    let result = run_grid(&cfg)?;
    write_grid(&result, &a.out)?;
    Ok(true)
}

fn print_items(items: &[CheckItem]) -> bool {
    for item in items {
        println!("{item}");
    }
    items.iter().all(|i| i.passed)
}

fn exact(a: ExactArgs) -> CmdResult {
    let mut ok = true;
    let mut did_something = false;
    let params = ExactParams {
        j_max: a.j_max,
        n_max: a.n_max,
        grid_resolution: a.grid_resolution,
        drift_n_max: a.drift_n_max,
    };
    let mut checks = Vec::new();
    for name in &a.check {
        for part in name.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                checks.extend(ExactCheck::ALL);
            } else {
                checks.push(part.parse::<ExactCheck>()?);
            }
        }
    }
    for check in checks {
        did_something = true;
        let report = run_check(check, &params)?;
        println!("== {check}");
        let passed = print_items(&report.items);
        println!("{} {check}", if passed { "PASS" } else { "FAIL" });
        ok &= passed;
    }
    if a.hierarchy {
        did_something = true;
        let ns: Vec<u64> = parse_list(&a.ns)?;
        let ns: Vec<usize> = ns.into_iter().map(|n| n as usize).collect();
        let models = a.model.map_or(vec![ModelKind::Sequential, ModelKind::Gossip], |m| vec![m]);
        for model in models {
            println!("== hierarchy {model}");
            ok &= print_items(&hierarchy_items(model, &ns, a.hierarchy_j)?);
        }
    }
    if a.hitting_times || a.kernel_out.is_some() {
        did_something = true;
        let missing = |f: &str| Error::InvalidArgument(format!("--{f} is required here"));
        let model = a.model.ok_or_else(|| missing("model"))?;
        let spec = ProcessSpec::new(a.j.ok_or_else(|| missing("j"))?)?;
        let n = a.n.ok_or_else(|| missing("n"))?;
        let k = kernel(model, spec, n)?;
        if let Some(path) = &a.kernel_out {
            write_kernel_csv(path, &k)?;
        }
        if a.hitting_times {
            let out = a.out.as_ref().ok_or_else(|| missing("out"))?;
            let profile = expected_absorption(&k)?;
            write_profile_csv(out, &profile)?;
            println!(
                "{model} {spec} n={n}: E[T | s = floor(n/2)] = {:.6}, residual {:.2e}",
                profile.expected_time(n / 2),
                profile.residual
            );
            if let Some(s0) = a.survival_s0 {
                let horizon = a.horizon.unwrap_or_else(|| default_horizon(model, n));
                let curve = survival(&k, s0, horizon)?;
                write_survival_csv(&out.with_extension("survival.csv"), &curve)?;
            }
        }
    }
    if !did_something {
        return Err(Error::InvalidArgument(
            "nothing to do: pass --check, --hierarchy, --hitting-times or --kernel-out".into(),
        ));
    }
    Ok(ok)
}

fn couple(a: CoupleArgs) -> CmdResult {
    ensure_dir(&a.out)?;
    let master = SeedPolicy::new(a.seed);
    let cap = default_step_cap(a.model, a.n, a.step_cap);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut violations = Vec::new();
    for (k, init) in a.init.iter().enumerate() {
        let s0 = init.initial_count(a.n)?;
        let policy = master.child(k as u64);
        let batch = run_coupled_batch(a.model, a.j_low, a.n, s0, a.runs, policy, cap, a.traces)?;
        for (i, trace) in batch.traces.iter().enumerate() {
            write_trace_csv(&a.out.join("traces").join(format!("s0_{s0}_run_{i}.csv")), trace)?;
        }
        let censored = batch.rows.iter().filter(|r| r.censored).count();
        println!(
            "{} P_{} vs P_{} n={} s0={} runs={} violations={} time_inversions={} censored={}",
            a.model,
            a.j_low,
            a.j_low + 1,
            a.n,
            s0,
            a.runs,
            batch.violation_count(),
            batch.time_inversions(),
            censored
        );
        summaries.push(serde_summary(&batch, censored));
        violations.extend(batch.violations.iter().cloned());
        rows.extend(batch.rows);
    }
    write_csv(&a.out.join("coupled_runs.csv"), &rows)?;
    write_json(&a.out.join("summary.json"), "coupled_summary", &summaries)?;
    if !violations.is_empty() {
        let path = a.out.join("violations.txt");
        std::fs::write(&path, violations.join("\n") + "\n").map_err(|e| Error::Io { path, source: e })?;
        eprintln!("dominance violated in {} run(s)", violations.len());
        return Ok(false);
    }
    Ok(true)
}

#[derive(serde::Serialize)]
struct BatchSummary {
    model: ModelKind,
    j_low: u32,
    j_high: u32,
    n: u64,
    s0: u64,
    runs: usize,
    violations: usize,
    time_inversions: usize,
    censored: usize,
    #[serde(rename = "mean_T_low")]
    mean_t_low: Option<f64>,
    #[serde(rename = "mean_T_high")]
    mean_t_high: Option<f64>,
}

fn serde_summary(batch: &majority_lab::coupling::CoupledBatch, censored: usize) -> BatchSummary {
    let mean = |f: &dyn Fn(&majority_lab::coupling::CoupledRunRow) -> Option<u64>| {
        let xs: Vec<f64> = batch.rows.iter().filter_map(f).map(|t| t as f64).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    BatchSummary {
        model: batch.model,
        j_low: batch.j_low,
        j_high: batch.j_low + 1,
        n: batch.n,
        s0: batch.s0,
        runs: batch.rows.len(),
        violations: batch.violation_count(),
        time_inversions: batch.time_inversions(),
        censored,
        mean_t_low: mean(&|r| r.t_low),
        mean_t_high: mean(&|r| r.t_high),
    }
}

fn grid(a: GridArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if let Some(j) = &a.j {
        cfg.js = parse_list(j)?;
    }
    if let Some(n) = &a.n {
        cfg.ns = parse_list(n)?;
    }
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    if let Some(i) = a.init {
        cfg.init = i;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.step_cap {
        cfg.step_cap_multiplier = c;
    }
    if let Some(o) = a.out {
        cfg.out = Some(o);
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::InvalidArgument("no output directory (--out or out = ...)".into()))?;
    let result = run_grid(&cfg)?;
    write_grid(&result, &out)?;
    Ok(true)
}

fn plots(a: PlotsArgs) -> CmdResult {
    let records = read_runs_csv(&a.input.join("runs.csv"))?;
    let cells = cells_from_records(&records);
    let mut models: Vec<ModelKind> = cells.iter().map(|c| c.model).collect();
    models.dedup();
    for model in models {
        let subset: Vec<_> = cells.iter().filter(|c| c.model == model).cloned().collect();
        let dir = if cells.iter().any(|c| c.model != model) { a.out.join(model.as_str()) } else { a.out.clone() };
        let files = emit_plot_data(&subset, &dir)?;
        println!("{}", files.means.display());
        for b in &files.boxplots {
            println!("{}", b.display());
        }
        println!("{}", files.summary.display());
    }
    if cells.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no runs", a.input.display())));
    }
    Ok(true)
}

fn theorem2(a: Theorem2Args) -> CmdResult {
    let master = SeedPolicy::new(a.seed);
    let pres = check_majority_preservation(a.model, a.j, a.n, a.zeta, a.runs, master.child(0))?;
    let pres_ok = pres.fraction >= a.min_preserved;
    println!(
        "{} preservation: n={} s0={} runs={} preserved={} fraction={:.4} (need >= {})",
        if pres_ok { "PASS" } else { "FAIL" },
        pres.n,
        pres.s0,
        pres.runs,
        pres.preserved,
        pres.fraction,
        a.min_preserved
    );
    let mut ok = pres_ok;
    let mut reports = serde_json::json!({ "preservation": pres });
    if a.model == ModelKind::Sequential && a.j == 3 {
        let nf = a.n as f64;
        let delta0 = (a.zeta * (nf * nf.ln()).sqrt()).max(1.0);
        let dbl = check_bias_doubling(a.n, delta0, a.runs, master.child(1))?;
        println!(
            "bias doubling: delta0={:.2} target={:.2} floor_violation_rate={:.4} within_2n_rate={:.4} unreached={}",
            dbl.delta0, dbl.target, dbl.floor_violation_rate, dbl.within_2n_rate, dbl.unreached
        );
        reports["bias_doubling"] = serde_json::to_value(&dbl)?;
        if let Some(eps) = a.drift_eps {
            let tail = check_drift_tail(a.n, eps, a.drift_r, a.runs, master.child(2))?;
            println!(
                "{} drift tail: s0={} bound={} exceedance={:.5} threshold={:.5}",
                if tail.passed { "PASS" } else { "FAIL" },
                tail.s0,
                tail.time_bound,
                tail.fraction,
                tail.threshold
            );
            ok &= tail.passed;
            reports["drift_tail"] = serde_json::to_value(&tail)?;
        }
    }
    if let Some(out) = &a.out {
        write_json(out, "theorem2", &reports)?;
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> CmdResult {
        let cli = Cli::try_parse_from(std::iter::once("majority-lab").chain(args.iter().copied()))
            .unwrap_or_else(|e| panic!("{e}"));
        dispatch(cli.command)
    }

    #[test]
    fn exact_checks_map_to_exit_codes() {
        let ok = run(&["exact", "--check", "lemma9", "--j-max", "4", "--grid-resolution", "50"]);
        assert_eq!(exit_code(&ok), 0);
        let drift = run(&["exact", "--check", "drift", "--drift-n-max", "20", "--grid-resolution", "20"]);
        assert_eq!(exit_code(&drift), EXIT_CHECK_FAILED);
        let unknown = run(&["exact", "--check", "lemma6"]);
        assert_eq!(exit_code(&unknown), 1);
        assert!(run(&["exact"]).is_err());
    }

    #[test]
    fn hitting_times_and_kernel_dump() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("times.csv");
        let kern = dir.path().join("kernel.csv");
        let r = run(&[
            "exact", "--hitting-times", "--model", "sequential", "--j", "3", "--n", "10",
            "--out", out.to_str().unwrap(), "--survival-s0", "5", "--horizon", "40",
            "--kernel-out", kern.to_str().unwrap(),
        ]);
        assert!(r.unwrap());
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("s,expected_time,win_prob\n"));
        assert_eq!(text.lines().count(), 12);
        let surv = std::fs::read_to_string(out.with_extension("survival.csv")).unwrap();
        assert_eq!(surv.lines().count(), 42);
        assert!(std::fs::read_to_string(&kern).unwrap().starts_with("s,up,stay,down\n"));
        assert!(run(&["exact", "--hitting-times", "--model", "gossip", "--n", "10"]).is_err());
    }

    #[test]
    fn grid_flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("g.cfg");
        let out = dir.path().join("out");
        std::fs::write(&cfg, format!("model = gossip\nj = 3\nn = 64\nruns = 4\nseed = 1\nout = {}\n", out.display())).unwrap();
        assert!(run(&["grid", "--config", cfg.to_str().unwrap(), "--runs", "6", "--j", "3,5"]).unwrap());
        let runs = read_runs_csv(&out.join("runs.csv")).unwrap();
        assert_eq!(runs.len(), 12);
        assert!(runs.iter().all(|r| r.model == ModelKind::Gossip && r.master_seed == 1));

        let plots_dir = dir.path().join("plots");
        assert!(run(&["plots", "--in", out.to_str().unwrap(), "--out", plots_dir.to_str().unwrap()]).unwrap());
        assert!(plots_dir.join("normalized_mean.dat").exists());
        assert!(plots_dir.join("boxplot_n64.dat").exists());
    }

    #[test]
    fn grid_without_output_is_an_error() {
        assert!(run(&["grid", "--runs", "1"]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let zero = run(&["simulate", "--model", "gossip", "--j", "3", "--n", "50", "--runs", "0", "--out", dir.path().to_str().unwrap()]);
        assert!(zero.is_err());
    }

    #[test]
    fn couple_writes_runs_summary_and_traces() {
        let dir = tempfile::tempdir().unwrap();
        let r = run(&[
            "couple", "--model", "sequential", "--j-low", "2", "--n", "30", "--runs", "20",
            "--init", "count:12", "--init", "bias:0.2", "--traces", "1", "--out", dir.path().to_str().unwrap(),
        ]);
        assert!(r.unwrap());
        let runs = std::fs::read_to_string(dir.path().join("coupled_runs.csv")).unwrap();
        assert!(runs.starts_with("run_index,s0,T_low,T_high,winner_low,winner_high,steps,censored,dominance\n"));
        assert_eq!(runs.lines().count(), 41);
        let traces: Vec<_> = std::fs::read_dir(dir.path().join("traces")).unwrap().collect();
        assert_eq!(traces.len(), 2);
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["schema_version"], 1);
        assert_eq!(summary["data"][0]["violations"], 0);
        assert!(!dir.path().join("violations.txt").exists());
    }

    #[test]
    fn theorem2_small_run() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("t2.json");
        let r = run(&[
            "theorem2", "--n", "400", "--zeta", "1", "--runs", "50", "--seed", "2",
            "--drift-eps", "0.2", "--out", out.to_str().unwrap(),
        ]);
        assert!(r.unwrap());
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert!(json["data"]["drift_tail"]["passed"].as_bool().unwrap());
        let strict = run(&["theorem2", "--n", "100", "--zeta", "0", "--runs", "40", "--min-preserved", "1.0"]);
        assert_eq!(exit_code(&strict), EXIT_CHECK_FAILED);
    }

    #[test]
    fn bad_init_rule_is_rejected_by_the_parser() {
        let parsed = Cli::try_parse_from(["majority-lab", "simulate", "--model", "gossip", "--j", "3", "--n", "9", "--init", "bias:x", "--out", "o"]);
        assert!(parsed.is_err());
    }
}
