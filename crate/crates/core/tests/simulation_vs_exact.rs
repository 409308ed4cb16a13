//! Monte Carlo means against exact expected absorption times and win
//! probabilities on small populations.

use majority_lab::chain::expected_absorption;
use majority_lab::harness::stats::binomial_se;
use majority_lab::kernels::kernel;
use majority_lab::simulate::run_to_consensus;
use majority_lab::{MajorityState, ModelKind, Opinion, ProcessSpec, SeedPolicy};

#[test]
fn mean_times_and_win_rates_match_the_chain() {
    let n = 40u64;
    let reps = 4000u64;
    for model in [ModelKind::Sequential, ModelKind::Gossip] {
        for j in [1u32, 2, 3, 4, 5, 7] {
            let spec = ProcessSpec::new(j).unwrap();
            let profile = expected_absorption(&kernel(model, spec, n as usize).unwrap()).unwrap();
            for s0 in [17u64, 26] {
                let policy = SeedPolicy::new(31).child(j as u64 * 1000 + s0);
                let start = MajorityState::new(n, s0).unwrap();
                let mut times = Vec::with_capacity(reps as usize);
                let mut wins = 0u64;
                for i in 0..reps {
                    let out = run_to_consensus(spec, model, start, &mut policy.derive_stream(i), u64::MAX, None);
                    times.push(out.steps as f64);
                    wins += u64::from(out.final_state.winner() == Some(Opinion::A));
                }
                let mean = times.iter().sum::<f64>() / reps as f64;
                let sd = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
                let exact = profile.expected_time(s0 as usize);
                assert!(
                    (mean - exact).abs() < 4.5 * sd / (reps as f64).sqrt(),
                    "{model} P_{j} s0={s0}: mean {mean} vs {exact}"
                );
                let p = profile.win_probability(s0 as usize);
                let rate = wins as f64 / reps as f64;
                assert!(
                    (rate - p).abs() < 4.5 * binomial_se(p, reps).max(1e-3),
                    "{model} P_{j} s0={s0}: win rate {rate} vs {p}"
                );
            }
        }
    }
}
