//! Exit criteria of the toolkit. Every test writes one `PASS`/`FAIL` line
//! for its criterion straight to stdout, so the lines show up even when the
//! test harness captures output.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output};

use majority_lab::harness::consistency::{step_goodness_of_fit, Sampler};
use majority_lab::harness::stats::mann_whitney;
use majority_lab::harness::{
    check_drift_tail, check_majority_preservation, hierarchy_items, run_check, run_grid,
    CheckItem, ExactCheck, ExactParams, ExperimentConfig,
};
use majority_lab::{ModelKind, ProcessSpec, SeedPolicy};

const BIN: &str = env!("CARGO_BIN_EXE_majority-lab");

fn report(criterion: u32, passed: bool, what: &str, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "criterion {criterion:>2}: {} {what} [{detail}]",
        if passed { "PASS" } else { "FAIL" }
    )
    .unwrap();
}

fn run_cli(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("MAJORITY_LAB_THREADS", t),
        None => cmd.env_remove("MAJORITY_LAB_THREADS"),
    };
    cmd.output().expect("failed to launch the CLI")
}

fn failed_items(stdout: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(stdout)
        .lines()
        .filter(|l| l.starts_with("FAIL"))
        .map(str::to_owned)
        .collect()
}

fn summarize(items: &[CheckItem]) -> String {
    let failed: Vec<String> = items.iter().filter(|i| !i.passed).map(|i| i.to_string()).collect();
    if failed.is_empty() {
        let worst = items.iter().map(|i| i.worst).fold(0.0, f64::max);
        format!("{} checks, worst {worst:.2e}", items.len())
    } else {
        failed.join("; ")
    }
}

#[test]
fn criterion_01_adoption_identities() {
    let out = run_cli(
        &["exact", "--check", "lemma7", "--check", "lemma9", "--j-max", "12", "--grid-resolution", "1000"],
        None,
    );
    let fails = failed_items(&out.stdout);
    let ok = out.status.success() && fails.is_empty();
    let lines = String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("PASS q_")).count();
    report(
        1,
        ok,
        "odd-even gap closed form and q_{2j-1} = q_{2j}, j <= 12, 1000-point grid, tol 1e-12",
        &format!("exit {:?}, {lines} identities pass, failures {fails:?}", out.status.code()),
    );
    assert!(ok, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(lines, 24);
}

#[test]
fn criterion_02_state_and_process_dominance() {
    let out = run_cli(
        &["exact", "--check", "lemma5,lemma8,lemma10,lemma11", "--j-max", "12", "--n-max", "64"],
        None,
    );
    let fails = failed_items(&out.stdout);
    let ok = out.status.success() && fails.is_empty();
    report(
        2,
        ok,
        "row monotonicity in s, P_{2j+1} over P_{2j} row dominance, P_{2j-1} = P_{2j} rows; n <= 64, j <= 12, both models, tol 1e-12",
        &format!("exit {:?}, failures {fails:?}", out.status.code()),
    );
    assert!(ok, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn criterion_03_hitting_time_hierarchy() {
    let mut items = Vec::new();
    for model in [ModelKind::Sequential, ModelKind::Gossip] {
        items.extend(hierarchy_items(model, &[4, 8, 16, 32, 64], 3).unwrap());
    }
    let ok = items.iter().all(|i| i.passed);
    report(
        3,
        ok,
        "E[T_{2j+2}] = E[T_{2j+1}] (rel 1e-9), E[T_{2j+1}] <= E[T_{2j}] + 1e-9, survival ordered to the default horizon; n in {4..64}, j in {1,2,3}",
        &summarize(&items),
    );
    assert!(ok, "{}", summarize(&items));
}

#[derive(serde::Deserialize)]
struct CoupledSummary {
    data: Vec<CoupledCell>,
}

#[derive(serde::Deserialize)]
struct CoupledCell {
    s0: u64,
    runs: u64,
    violations: u64,
}

fn coupled_cells(dir: &Path) -> Vec<CoupledCell> {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str::<CoupledSummary>(&text).unwrap().data
}

#[test]
fn criterion_04_coupled_dominance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    let mut cases: Vec<(&str, u32, &str, &str, [&str; 3])> = Vec::new();
    for j in [4u32, 6, 8] {
        cases.push(("sequential", j, "100", "10000", ["count:50", "count:60", "count:90"]));
    }
    for j in [4u32, 6] {
        cases.push(("gossip", j, "1000", "1000", ["count:500", "count:600", "count:900"]));
    }
    for (model, j, n, runs, inits) in cases {
        let dir = tmp.path().join(format!("{model}_{j}"));
        let j_arg = j.to_string();
        let mut args = vec![
            "couple", "--model", model, "--j-low", &j_arg, "--n", n, "--runs", runs, "--seed", "4",
            "--out", dir.to_str().unwrap(),
        ];
        for init in &inits {
            args.extend(["--init", init]);
        }
        let out = run_cli(&args, None);
        let cells = coupled_cells(&dir);
        let violations: u64 = cells.iter().map(|c| c.violations).sum();
        let total: u64 = cells.iter().map(|c| c.runs).sum();
        let starts: Vec<u64> = cells.iter().map(|c| c.s0).collect();
        let case_ok = out.status.success() && violations == 0 && total == 3 * runs.parse::<u64>().unwrap();
        ok &= case_ok;
        details.push(format!("{model} j_low={j} s0={starts:?}: {total} runs, {violations} violations, exit {:?}", out.status.code()));
    }
    report(4, ok, "zero dominance-flag violations in coupled runs, exit code 0", &details.join("; "));
    assert!(ok, "{details:#?}");
}

#[test]
fn criterion_05_normalized_convergence_time() {
    let ns = vec![100, 1000, 10_000, 100_000];
    let mut ok = true;
    let mut details = Vec::new();
    for model in [ModelKind::Sequential, ModelKind::Gossip] {
        let mut cfg = ExperimentConfig::new(model, vec![3], ns.clone(), 100);
        cfg.seed = 5;
        let res = run_grid(&cfg).unwrap();
        for c in &res.cells {
            let mean = c.normalized_mean();
            let cell_ok = c.censored == 0 && mean.is_some_and(|m| (0.3..=3.0).contains(&m));
            ok &= cell_ok;
            details.push(format!("{model} n={}: {:.3}", c.n, mean.unwrap_or(f64::NAN)));
        }
    }
    report(
        5,
        ok,
        "3-Majority mean interactions/(n ln n) and mean rounds/ln n in [0.3, 3], balanced start, 100 runs",
        &details.join(", "),
    );
    assert!(ok, "{details:?}");
}

#[test]
fn criterion_06_hierarchy_in_aggregate() {
    const ALPHA: f64 = 1e-3;
    let mut ok = true;
    let mut details = Vec::new();
    for model in [ModelKind::Sequential, ModelKind::Gossip] {
        let mut cfg = ExperimentConfig::new(model, (3..=8).collect(), vec![10_000], 100);
        cfg.seed = 6;
        let res = run_grid(&cfg).unwrap();
        let steps = |j| res.steps(j, 10_000);
        for (a, b) in [(3, 4), (5, 6), (7, 8)] {
            let t = mann_whitney(&steps(a), &steps(b)).unwrap();
            let same = t.p_two_sided >= ALPHA;
            ok &= same;
            details.push(format!("{model} {a}~{b}: p={:.3}", t.p_two_sided));
        }
        for (a, b) in [(4, 5), (6, 7)] {
            let t = mann_whitney(&steps(a), &steps(b)).unwrap();
            let faster = t.p_greater < ALPHA;
            ok &= faster;
            details.push(format!("{model} {a}>{b}: p={:.1e}", t.p_greater));
        }
    }
    report(
        6,
        ok,
        "n = 10^4, 100 runs: no rank-test difference within (3,4),(5,6),(7,8); T decreases 4->5 and 6->7; level 1e-3",
        &details.join(", "),
    );
    assert!(ok, "{details:?}");
}

#[test]
fn criterion_07_majority_preservation() {
    let rep = check_majority_preservation(ModelKind::Sequential, 3, 10_000, 1.0, 1000, SeedPolicy::new(7)).unwrap();
    let ok = rep.fraction >= 0.99;
    report(
        7,
        ok,
        "sequential 3-Majority, n = 10^4, zeta = 1, 1000 runs: initial majority wins >= 99%",
        &format!("s0 = {}, preserved {}/{}", rep.s0, rep.preserved, rep.runs),
    );
    assert!(ok);
}

#[test]
fn criterion_08_drift_and_ratio() {
    let params = ExactParams::default();
    let drift = run_check(ExactCheck::Drift, &params).unwrap();
    let ratio = run_check(ExactCheck::Ratio, &params).unwrap();
    let find = |prefix: &str| drift.items.iter().find(|i| i.label.starts_with(prefix)).unwrap().clone();
    let closed_form = find("delta_s =");
    let printed_margin = find("delta at (1 - eps) n/2 = (1 + eps/2)");
    let ok = closed_form.passed && printed_margin.passed && ratio.passed();
    report(
        8,
        ok,
        "delta_s closed form (n <= 1000, tol 1e-14); delta at (1-eps)n/2 = (1+eps/2)eps/(4n) (tol 1e-14); ruin ratio 1 at 0, strictly decreasing, < 1",
        &format!(
            "closed form {}; margin value {}; ratio {}",
            if closed_form.passed { "ok" } else { "FAILED" },
            printed_margin,
            summarize(&ratio.items)
        ),
    );
    assert!(closed_form.passed, "{closed_form}");
    assert!(ratio.passed(), "{}", summarize(&ratio.items));
    assert!(printed_margin.passed, "{printed_margin}");
}

#[test]
fn criterion_09_drift_tail_bound() {
    let rep = check_drift_tail(10_000, 0.2, 3.0, 10_000, SeedPolicy::new(9)).unwrap();
    report(
        9,
        rep.passed,
        "n = 10^4, eps = 0.2, r = 3, 10^4 runs: P[T > ceil((r + ln s0)/delta)] <= e^-3 + 3 SE",
        &format!(
            "s0 = {}, bound {} steps, exceedance {:.5} vs {:.5}",
            rep.s0, rep.time_bound, rep.fraction, rep.threshold
        ),
    );
    assert!(rep.passed);
}

#[test]
fn criterion_10_sampler_kernel_consistency() {
    // Family-wise level 1e-3 over every fit (Sidak per-test threshold).
    const LEVEL: f64 = 1e-3;
    let alphas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut plan: Vec<(ModelKind, Sampler, u64, u64)> = Vec::new();
    for (model, sampler, n, samples) in [
        (ModelKind::Sequential, Sampler::Direct, 100u64, 20_000u64),
        (ModelKind::Gossip, Sampler::Direct, 100, 20_000),
        (ModelKind::Gossip, Sampler::Reference, 16, 4000),
        (ModelKind::Gossip, Sampler::Reference, 64, 4000),
    ] {
        plan.push((model, sampler, n, samples));
    }
    let tests = plan.len() * 12 * alphas.len();
    let per_test = 1.0 - (1.0 - LEVEL).powf(1.0 / tests as f64);
    let policy = SeedPolicy::new(10);
    let mut worst: Option<(f64, String)> = None;
    let mut index = 0u64;
    for (model, sampler, n, samples) in plan {
        for j in 1..=12 {
            for a in alphas {
                let s = (a * n as f64).round() as u64;
                let mut rng = policy.derive_stream(index);
                index += 1;
                let fit = step_goodness_of_fit(model, sampler, ProcessSpec::new(j).unwrap(), n, s, samples, &mut rng).unwrap();
                if worst.as_ref().is_none_or(|w| fit.fit.p_value < w.0) {
                    worst = Some((fit.fit.p_value, format!("{model} {sampler:?} j={j} n={n} s={s}")));
                }
            }
        }
    }
    let (p_min, at) = worst.unwrap();
    let ok = p_min >= per_test;
    report(
        10,
        ok,
        "chi-square fit of sampled steps to kernel rows, j <= 12, alpha grid; gossip per-agent reference at n <= 64; level 1e-3",
        &format!("{tests} fits, smallest p = {p_min:.2e} ({at}), per-test threshold {per_test:.2e}"),
    );
    assert!(ok);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn criterion_11_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("grid.cfg");
    std::fs::write(&config, "model = gossip\nj = 3..5\nn = 200, 500\nruns = 30\nseed = 11\n").unwrap();
    let invocations: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate",
            ["simulate", "--model", "sequential", "--j", "3,4", "--n", "300", "--runs", "40", "--init", "bias:0.5", "--seed", "42"]
                .map(String::from)
                .to_vec(),
        ),
        (
            "couple",
            ["couple", "--model", "gossip", "--j-low", "4", "--n", "400", "--runs", "60", "--seed", "3", "--traces", "2", "--init", "balanced", "--init", "count:250"]
                .map(String::from)
                .to_vec(),
        ),
        ("grid", vec!["grid".into(), "--config".into(), config.display().to_string()]),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, args) in invocations {
        let mut outputs = Vec::new();
        for (k, threads) in [Some("1"), Some("1"), Some("4"), None].into_iter().enumerate() {
            let dir = tmp.path().join(format!("{name}_{k}"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            let d = dir.display().to_string();
            full.extend(["--out", d.as_str()]);
            let out = run_cli(&full, threads);
            assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push(read_all(&dir));
        }
        let csvs = outputs[0].iter().filter(|(f, _)| f.ends_with(".csv")).count();
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        ok &= same && csvs > 0;
        details.push(format!("{name}: {} files ({csvs} csv) identical = {same}", outputs[0].len()));
    }
    report(
        11,
        ok,
        "simulate/couple/grid output byte-identical across repeats and MAJORITY_LAB_THREADS in {1, 4, unset}",
        &details.join("; "),
    );
    assert!(ok, "{details:?}");
}
