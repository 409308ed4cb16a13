//! File emission: CSV tables, JSON summaries and whitespace-delimited plot
//! data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::grid::{normalizers, CellStats};
use crate::chain::{AbsorptionProfile, SurvivalCurve};
use crate::coupling::CoupledTrace;
use crate::error::{Error, Result};
use crate::kernels::StepKernel;
use crate::simulate::RunRecord;
use crate::types::ModelKind;

/// Version stamped into every JSON summary.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    data: &'a T,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON `{schema_version, kind, data}`.
pub fn write_json<T: Serialize>(path: &Path, kind: &str, data: &T) -> Result<()> {
    let mut file = create(path)?;
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        kind,
        data,
    };
    serde_json::to_writer_pretty(&mut file, &env)?;
    writeln!(file).map_err(|e| Error::io(path, e))
}

/// One CSV file from serializable rows, header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// CSV with an explicit header, for tables without a fixed row type.
fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        // Keep the header even without rows.
        let header = [
            "run_index", "master_seed", "n", "j", "model", "s0", "winner", "steps", "parallel_time", "censored",
        ];
        return write_table(path, &header.map(String::from), std::iter::empty());
    }
    write_csv(path, records)
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Columns `s, expected_time, win_prob`.
pub fn write_profile_csv(path: &Path, profile: &AbsorptionProfile) -> Result<()> {
    let header = ["s", "expected_time", "win_prob"].map(String::from);
    write_table(
        path,
        &header,
        profile.states().map(|s| {
            vec![
                s.to_string(),
                profile.expected_time(s).to_string(),
                profile.win_probability(s).to_string(),
            ]
        }),
    )
}

/// Columns `s0, t, survival`.
pub fn write_survival_csv(path: &Path, curve: &SurvivalCurve) -> Result<()> {
    let header = ["s0", "t", "survival"].map(String::from);
    write_table(
        path,
        &header,
        curve
            .values
            .iter()
            .enumerate()
            .map(|(t, v)| vec![curve.s0.to_string(), t.to_string(), v.to_string()]),
    )
}

/// Sequential kernels as `s, up, stay, down`; gossip kernels as the full
/// row `s, p_0, ..., p_n`.
pub fn write_kernel_csv(path: &Path, kernel: &StepKernel) -> Result<()> {
    let states: Vec<usize> = kernel.states().collect();
    if kernel.is_tridiagonal() {
        let header = ["s", "up", "stay", "down"].map(String::from);
        write_table(
            path,
            &header,
            states.into_iter().map(|s| {
                vec![
                    s.to_string(),
                    kernel.up(s).to_string(),
                    kernel.stay(s).to_string(),
                    kernel.down(s).to_string(),
                ]
            }),
        )
    } else {
        let n = kernel.n();
        let header: Vec<String> = std::iter::once("s".to_string())
            .chain((0..=n).map(|r| format!("p_{r}")))
            .collect();
        write_table(
            path,
            &header,
            states.into_iter().map(|s| {
                std::iter::once(s.to_string())
                    .chain((0..=n).map(|r| kernel.prob(s, r).to_string()))
                    .collect()
            }),
        )
    }
}

/// Columns `t, x_low, x_high, dominance_flag, majority_low, majority_high`.
pub fn write_trace_csv(path: &Path, trace: &CoupledTrace) -> Result<()> {
    write_csv(path, &trace.points)
}

/// Plot files written by [`emit_plot_data`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotFiles {
    pub means: PathBuf,
    pub boxplots: Vec<PathBuf>,
    pub summary: PathBuf,
}

#[derive(Serialize)]
struct PlotRow<'a> {
    model: ModelKind,
    n: u64,
    j: u32,
    runs: u64,
    censored: u64,
    mean_steps: Option<f64>,
    normalized_mean_ln: Option<f64>,
    normalized_mean_log2: Option<f64>,
    normalizer_ln: f64,
    normalizer_log2: f64,
    normalized_quartiles_ln: Option<&'a [f64; 5]>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

/// Plot-ready data for the normalized-time figures.
///
/// * `normalized_mean.dat`: `n j mean/ln mean/log2` (one block per `j`,
///   separated by blank lines).
/// * `boxplot_n{n}.dat`: `j q0 q1 median q3 q4` of the base-e normalized time.
/// * `plot_summary.json`: every cell with both normalizations.
pub fn emit_plot_data(cells: &[CellStats], dir: &Path) -> Result<PlotFiles> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("no cell statistics to plot".into()));
    }
    ensure_dir(dir)?;
    let model = cells[0].model;
    let unit = match model {
        ModelKind::Gossip => "rounds",
        ModelKind::Sequential => "interactions",
    };
    let mut by_j: BTreeMap<u32, Vec<&CellStats>> = BTreeMap::new();
    let mut by_n: BTreeMap<u64, Vec<&CellStats>> = BTreeMap::new();
    for c in cells {
        by_j.entry(c.j).or_default().push(c);
        by_n.entry(c.n).or_default().push(c);
    }
    let means = dir.join("normalized_mean.dat");
    let mut text = format!(
        "# model {model}: mean {unit} normalized by {} (ln) and by {} (log2)\n# n j mean_ln mean_log2\n",
        if model == ModelKind::Gossip { "ln n" } else { "n ln n" },
        if model == ModelKind::Gossip { "log2 n" } else { "n log2 n" },
    );
    for (i, (_, group)) in by_j.iter_mut().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        group.sort_by_key(|c| c.n);
        for c in group.iter() {
            text.push_str(&format!(
                "{} {} {} {}\n",
                c.n,
                c.j,
                fmt_opt(c.normalized_mean()),
                fmt_opt(c.normalized_log2.as_ref().map(|s| s.mean))
            ));
        }
    }
    fs::write(&means, text).map_err(|e| Error::io(&means, e))?;
    let mut boxplots = Vec::new();
    for (n, group) in by_n.iter_mut() {
        group.sort_by_key(|c| c.j);
        let path = dir.join(format!("boxplot_n{n}.dat"));
        let mut text = format!("# model {model}, n = {n}: normalized (ln) {unit} quantiles\n# j q0 q1 median q3 q4\n");
        for c in group.iter() {
            let q = c.normalized.as_ref().map(|s| s.quartiles);
            let cols: Vec<String> = (0..5).map(|k| fmt_opt(q.map(|q| q[k]))).collect();
            text.push_str(&format!("{} {}\n", c.j, cols.join(" ")));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        boxplots.push(path);
    }
    let rows: Vec<PlotRow> = cells
        .iter()
        .map(|c| {
            let (ln, l2) = normalizers(c.model, c.n);
            PlotRow {
                model: c.model,
                n: c.n,
                j: c.j,
                runs: c.runs,
                censored: c.censored,
                mean_steps: c.steps.as_ref().map(|s| s.mean),
                normalized_mean_ln: c.normalized_mean(),
                normalized_mean_log2: c.normalized_log2.as_ref().map(|s| s.mean),
                normalizer_ln: ln,
                normalizer_log2: l2,
                normalized_quartiles_ln: c.normalized.as_ref().map(|s| &s.quartiles),
            }
        })
        .collect();
    let summary = dir.join("plot_summary.json");
    write_json(&summary, "plot_summary", &rows)?;
    Ok(PlotFiles {
        means,
        boxplots,
        summary,
    })
}

/// Regroup run records into per-cell statistics, ordered by
/// `(model, n, j)`.
pub fn cells_from_records(records: &[RunRecord]) -> Vec<CellStats> {
    let mut groups: BTreeMap<(ModelKind, u64, u32), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model, r.n, r.j)).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|((model, n, j), rs)| CellStats::from_records(model, j, n, &rs))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::grid::run_grid;
    use crate::kernels::{gossip_kernel, sequential_kernel};
    use crate::types::ProcessSpec;

    #[test]
    fn runs_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ModelKind::Sequential, vec![3], vec![30], 6);
        cfg.step_cap_multiplier = 0.5;
        let res = run_grid(&cfg).unwrap();
        let path = dir.path().join("runs.csv");
        write_runs_csv(&path, &res.records).unwrap();
        let back = read_runs_csv(&path).unwrap();
        assert_eq!(back, res.records);
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("run_index,master_seed,n,j,model,s0,winner,steps,parallel_time,censored\n"));
        assert_eq!(cells_from_records(&back), res.cells);
    }

    #[test]
    fn plot_files_have_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(ModelKind::Gossip, vec![3, 4], vec![50, 100], 4);
        let res = run_grid(&cfg).unwrap();
        let files = emit_plot_data(&res.cells, dir.path()).unwrap();
        let means = fs::read_to_string(&files.means).unwrap();
        assert!(means.starts_with("# model gossip"));
        let data: Vec<&str> = means.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
        assert_eq!(data.len(), 4);
        assert!(data.iter().all(|l| l.split_whitespace().count() == 4));
        assert_eq!(files.boxplots.len(), 2);
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.summary).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert!(emit_plot_data(&[], dir.path()).is_err());
    }

    #[test]
    fn kernel_dumps() {
        let dir = tempfile::tempdir().unwrap();
        let p = ProcessSpec::new(3).unwrap();
        let seq = dir.path().join("seq.csv");
        write_kernel_csv(&seq, &sequential_kernel(p, 4).unwrap()).unwrap();
        let text = fs::read_to_string(&seq).unwrap();
        assert!(text.starts_with("s,up,stay,down\n"));
        assert_eq!(text.lines().count(), 6);
        let gos = dir.path().join("gossip.csv");
        write_kernel_csv(&gos, &gossip_kernel(p, 3).unwrap()).unwrap();
        assert!(fs::read_to_string(&gos).unwrap().starts_with("s,p_0,p_1,p_2,p_3\n"));
    }

    #[test]
    fn unwritable_paths_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = write_runs_csv(&blocker.join("runs.csv"), &[]).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}
