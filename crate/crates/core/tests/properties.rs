mod common;

use common::*;
use dmfv::diag::Violation;
use dmfv::fluidics::{run_lines, verify_program, Policy, StepOutcome, TickHook, VerifyOptions};
use dmfv::isa::TimedLine;
use dmfv::graph::{conformance, ConformOptions};
use dmfv::pins::{verify_program_pins, PinHook, PinMap};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn accepted_ticks_keep_droplets_apart(seed in any::<u64>()) {
        let p = random_program(&mut rng(seed));
        let (trace, _) = verify_program(&p, &VerifyOptions { policy: Policy::All, t_max: None });
        prop_assert_eq!(separation_holds(&trace), Ok(()));
    }

    #[test]
    fn droplets_are_conserved(seed in any::<u64>()) {
        let p = random_program(&mut rng(seed));
        let (trace, _) = verify_program(&p, &VerifyOptions::default());
        prop_assert_eq!(occupancy_conserved(&trace), Ok(()));
    }

    #[test]
    fn verification_is_deterministic(seed in any::<u64>()) {
        let p = random_program(&mut rng(seed));
        let opts = VerifyOptions { policy: Policy::All, t_max: None };
        let a = format!("{:?}", verify_program(&p, &opts).1);
        let b = format!("{:?}", verify_program(&p, &opts).1);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mixing_keeps_vectors_normalized(seed in any::<u64>()) {
        for cf in random_mix_tree(&mut rng(seed)) {
            prop_assert!(cf.sums_to_one(), "{:?}", cf);
        }
    }

    #[test]
    fn conformance_is_reflexive_and_label_blind(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r);
        let opts = ConformOptions::default();
        prop_assert!(conformance(&g, &g, &opts).passed());
        let h = relabeled(&g, &mut r);
        prop_assert!(conformance(&g, &h, &opts).passed());
        prop_assert!(conformance(&h, &g, &opts).passed());
    }

    #[test]
    fn conformance_agrees_with_brute_force(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_graph(&mut r);
        let h = mutated(&g, &mut r);
        let h = relabeled(&h, &mut r);
        let opts = ConformOptions::default();
        prop_assert_eq!(conformance(&g, &h, &opts).passed(), brute_force_match(&g, &h, opts.accuracy));
    }

    #[test]
    fn injective_pins_change_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_program(&mut r);
        let (rows, cols) = (p.header.rows, p.header.cols);
        let mut pins: Vec<u32> = (1..=rows * cols).collect();
        pins.shuffle(&mut r);
        let map = PinMap::new(rows, cols, pins).unwrap();
        for policy in [Policy::FirstError, Policy::All] {
            let opts = VerifyOptions { policy, t_max: None };
            let (_, general) = verify_program(&p, &opts);
            let (_, pinned) = verify_program_pins(&p, &map, &opts).unwrap();
            prop_assert_eq!(&general, &pinned);
        }
    }
}

/// Counts the pairs a pin phase should look at on each clean tick; departing droplets hold no cell.
struct Counting<'a> {
    inner: PinHook<'a>,
    expected: usize,
}

impl TickHook for Counting<'_> {
    fn check(&mut self, line: &TimedLine, outcome: &StepOutcome) -> Vec<Violation> {
        if outcome.violations.is_empty() {
            let leaving = |loc| outcome.motions.iter().any(|m| m.from == Some(loc) && m.to.is_none());
            let k = outcome
                .start
                .droplets()
                .filter(|d| outcome.start.mixer_holding(d.loc).is_none() && !leaving(d.loc))
                .count();
            self.expected += k * k.saturating_sub(1) / 2;
        }
        self.inner.check(line, outcome)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_free_pair_is_checked_once_per_tick(seed in any::<u64>()) {
        let p = random_program(&mut rng(seed));
        let map = PinMap::dedicated(p.header.rows, p.header.cols);
        let mut hook = Counting { inner: PinHook::new(&map), expected: 0 };
        run_lines(&p, &p.main, &VerifyOptions { policy: Policy::All, t_max: None }, &mut hook);
        prop_assert_eq!(hook.inner.pair_checks, hook.expected);
    }
}

#[test]
fn fuzzer_reaches_long_clean_runs() {
    let mut long = 0;
    let mut mixes = 0;
    for seed in 0..200 {
        let p = random_program(&mut rng(seed));
        let (trace, _) = verify_program(&p, &VerifyOptions::default());
        if accepted_ticks(&trace) >= 10 {
            long += 1;
        }
        mixes += trace.events().filter(|e| matches!(e, dmfv::fluidics::Event::MixStarted { .. })).count();
    }
    assert!(long >= 50, "{long}");
    assert!(mixes >= 20, "{mixes}");
}

#[test]
fn graph_edits_produce_both_verdicts() {
    let (mut pass, mut fail) = (0, 0);
    for seed in 0..300 {
        let mut r = rng(seed);
        let g = random_graph(&mut r);
        let h = mutated(&g, &mut r);
        if conformance(&g, &h, &ConformOptions::default()).passed() {
            pass += 1;
        } else {
            fail += 1;
        }
    }
    assert!(pass >= 20 && fail >= 100, "{pass} pass, {fail} fail");
}
