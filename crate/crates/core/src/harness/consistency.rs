//! Goodness-of-fit of the step samplers against analytic kernel rows.

use rand::Rng;
use serde::Serialize;

use super::stats::{chi_square_gof, GoodnessOfFit};
use crate::error::{Error, Result};
use crate::kernels::{gossip_row, sequential_kernel};
use crate::simulate::{gossip_round_reference, step};
use crate::types::{MajorityState, ModelKind, ProcessSpec};

/// Which sampler produces the next state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// The production step: literal contacts (sequential) or the binomial
    /// shortcut (gossip).
    Direct,
    /// Per-agent gossip round.
    Reference,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepFit {
    pub model: ModelKind,
    pub sampler: Sampler,
    pub j: u32,
    pub n: u64,
    pub s: u64,
    pub samples: u64,
    pub fit: GoodnessOfFit,
}

/// Draw `samples` one-step successors of `(n, s)` and test their histogram
/// against the kernel row.
pub fn step_goodness_of_fit<R: Rng + ?Sized>(
    model: ModelKind,
    sampler: Sampler,
    spec: ProcessSpec,
    n: u64,
    s: u64,
    samples: u64,
    rng: &mut R,
) -> Result<StepFit> {
    let state = MajorityState::new(n, s)?;
    if sampler == Sampler::Reference && model != ModelKind::Gossip {
        return Err(Error::InvalidArgument("the per-agent reference exists for gossip only".into()));
    }
    let row: Vec<f64> = match model {
        ModelKind::Sequential => {
            let k = sequential_kernel(spec, n as usize)?;
            let r = k.row(s as usize);
            (0..=n as usize).map(|x| r.prob(x)).collect()
        }
        ModelKind::Gossip => gossip_row(spec, n as usize, s as usize),
    };
    let mut counts = vec![0u64; n as usize + 1];
    for _ in 0..samples {
        let next = match sampler {
            Sampler::Direct => step(spec, model, state, rng),
            Sampler::Reference => gossip_round_reference(spec, state, rng),
        };
        counts[next.s() as usize] += 1;
    }
    // Cells with zero probability must stay empty; they are dropped from
    // the chi-square sum.
    let mut observed = Vec::new();
    let mut probs = Vec::new();
    for (c, p) in counts.into_iter().zip(row) {
        if p > 0.0 {
            observed.push(c);
            probs.push(p);
        } else if c > 0 {
            return Err(Error::Numeric(format!(
                "{model} {spec} n = {n}, s = {s}: sampled an impossible successor"
            )));
        }
    }
    Ok(StepFit {
        model,
        sampler,
        j: spec.j(),
        n,
        s,
        samples,
        fit: chi_square_gof(&observed, &probs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SeedPolicy;

    #[test]
    fn samplers_fit_their_rows() {
        let mut rng = SeedPolicy::new(12).derive_stream(0);
        let p4 = ProcessSpec::new(4).unwrap();
        for (model, sampler) in [
            (ModelKind::Sequential, Sampler::Direct),
            (ModelKind::Gossip, Sampler::Direct),
            (ModelKind::Gossip, Sampler::Reference),
        ] {
            let f = step_goodness_of_fit(model, sampler, p4, 30, 18, 5000, &mut rng).unwrap();
            assert!(f.fit.p_value > 1e-3, "{f:?}");
        }
        assert!(step_goodness_of_fit(ModelKind::Sequential, Sampler::Reference, p4, 30, 18, 1, &mut rng).is_err());
    }

    #[test]
    fn a_wrong_row_is_detected() {
        // Sampling P_5 against the P_4 gossip row at a visible gap.
        let mut rng = SeedPolicy::new(13).derive_stream(0);
        let p4 = ProcessSpec::new(4).unwrap();
        let p5 = ProcessSpec::new(5).unwrap();
        let row = gossip_row(p4, 60, 36);
        let mut counts = vec![0u64; 61];
        for _ in 0..20_000 {
            let next = step(p5, ModelKind::Gossip, MajorityState::new(60, 36).unwrap(), &mut rng);
            counts[next.s() as usize] += 1;
        }
        let fit = chi_square_gof(&counts, &row).unwrap();
        assert!(fit.p_value < 1e-6, "{fit:?}");
    }
}
