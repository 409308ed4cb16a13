//! Experiment configuration: the initial-state rule, the grid description
//! and the flat `key = value` file format mirroring the CLI flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::{default_step_cap, DEFAULT_CAP_MULTIPLIER};
use crate::types::{MajorityState, ModelKind, ProcessSpec, SeedPolicy};

/// How the initial count of opinion `a` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum InitRule {
    /// `floor(n / 2)`.
    Balanced,
    /// `ceil(n/2 + zeta * sqrt(n ln n))`.
    Bias { zeta: f64 },
    /// An explicit count.
    Count { s0: u64 },
}

impl InitRule {
    pub fn initial_count(self, n: u64) -> Result<u64> {
        let s0 = match self {
            InitRule::Balanced => n / 2,
            InitRule::Bias { zeta } => {
                let nf = n as f64;
                let raw = (nf / 2.0 + zeta * (nf * nf.ln()).sqrt()).ceil();
                if raw < 0.0 || raw > nf {
                    return Err(Error::InvalidState(format!(
                        "bias rule zeta = {zeta} gives s0 = {raw} outside 0..={n}"
                    )));
                }
                raw as u64
            }
            InitRule::Count { s0 } => s0,
        };
        if s0 > n {
            return Err(Error::InvalidState(format!("s exceeds n (s = {s0}, n = {n})")));
        }
        Ok(s0)
    }

    pub fn initial_state(self, n: u64) -> Result<MajorityState> {
        MajorityState::new(n, self.initial_count(n)?)
    }
}

impl FromStr for InitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::InvalidArgument(format!(
                "bad init rule {s:?} (expected balanced, bias:ZETA or count:S0)"
            ))
        };
        match s.split_once(':') {
            None if s == "balanced" => Ok(InitRule::Balanced),
            Some(("bias", z)) => {
                let zeta: f64 = z.trim().parse().map_err(|_| bad())?;
                if !zeta.is_finite() {
                    return Err(bad());
                }
                Ok(InitRule::Bias { zeta })
            }
            Some(("count", c)) => Ok(InitRule::Count {
                s0: c.trim().parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitRule::Balanced => f.write_str("balanced"),
            InitRule::Bias { zeta } => write!(f, "bias:{zeta}"),
            InitRule::Count { s0 } => write!(f, "count:{s0}"),
        }
    }
}

/// One Monte Carlo grid over sample sizes and population sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub js: Vec<u32>,
    pub ns: Vec<u64>,
    pub runs: u64,
    pub init: InitRule,
    pub seed: u64,
    /// Cap per run as a multiple of `n ln n` interactions or `ln n` rounds.
    pub step_cap_multiplier: f64,
    /// Left out of serialized configs.
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(model: ModelKind, js: Vec<u32>, ns: Vec<u64>, runs: u64) -> Self {
        ExperimentConfig {
            model,
            js,
            ns,
            runs,
            init: InitRule::Balanced,
            seed: 0,
            step_cap_multiplier: DEFAULT_CAP_MULTIPLIER,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.js.is_empty() || self.ns.is_empty() {
            return Err(Error::InvalidArgument("j-list and n-list must be non-empty".into()));
        }
        for &j in &self.js {
            ProcessSpec::new(j)?;
        }
        for &n in &self.ns {
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "population size n = {n} too small; normalization needs n >= 2"
                )));
            }
            self.init.initial_count(n)?;
        }
        if !(self.step_cap_multiplier > 0.0 && self.step_cap_multiplier.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "step cap multiplier {} must be positive",
                self.step_cap_multiplier
            )));
        }
        Ok(())
    }

    pub fn policy(&self) -> SeedPolicy {
        SeedPolicy::new(self.seed)
    }

    pub fn step_cap(&self, n: u64) -> u64 {
        default_step_cap(self.model, n, self.step_cap_multiplier)
    }

    /// Apply one `key = value` setting. Keys match the long CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidArgument(format!("bad {what} {value:?}"));
        match key {
            "model" => self.model = value.parse()?,
            "j" => self.js = parse_list(value)?,
            "n" => self.ns = parse_list(value)?,
            "runs" => self.runs = value.parse().map_err(|_| bad("runs"))?,
            "init" => self.init = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "step-cap" => self.step_cap_multiplier = value.parse().map_err(|_| bad("step cap"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::InvalidArgument(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parse a config file. Blank lines and `#` comments are skipped; every
    /// other line is `key = value`. Unset keys keep the defaults of
    /// [`ExperimentConfig::default`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            cfg.set(&key, v.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(cfg)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::new(ModelKind::Sequential, vec![3], vec![1000], 100)
    }
}

/// Parse `3,4,5`, `3..8` (inclusive) or a mix such as `3..5,8`.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr + Copy + Into<u64> + TryFrom<u64>,
{
    let bad = || Error::InvalidArgument(format!("bad list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: T = a.trim().parse().map_err(|_| bad())?;
                let b: T = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                let (a, b): (u64, u64) = (a.into(), b.into());
                if a > b {
                    return Err(bad());
                }
                for v in a..=b {
                    out.push(T::try_from(v).map_err(|_| bad())?);
                }
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
