//! Property tests for the soft-minimum objective.

use probpit::loss::{pit_loss, prob_pit_loss, softmin, Gamma};
use probpit::perm::{enumerate_permutations, PermutationCosts};
use proptest::prelude::*;

fn costs_strategy(s: usize) -> impl Strategy<Value = Vec<f64>> {
    let n: usize = (1..=s).product();
    proptest::collection::vec(0.0f64..100.0, n..=n)
}

fn make_pc(costs: Vec<f64>, s: usize) -> PermutationCosts {
    PermutationCosts::new(costs, enumerate_permutations(s).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bounds_weights_and_pit_limit(
        costs in costs_strategy(3),
        gamma in 0.05f64..50.0,
    ) {
        let pc = make_pc(costs, 3);
        let g = Gamma::new(gamma).unwrap();
        let r = prob_pit_loss(&pc, g).unwrap();
        let g_min = pc.min_cost();
        let n = pc.costs.len() as f64;

        prop_assert!(r.loss <= g_min + 1e-12);
        prop_assert!(r.loss >= g_min - gamma * n.ln() - 1e-9);

        let sum: f64 = r.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(r.weights.iter().all(|&w| w <= r.weights[pc.min_index] + 1e-15));

        // the gamma -> 0 gap is bounded by gamma * ln(S!)
        let pit = pit_loss(&pc);
        prop_assert!((r.loss - pit.loss).abs() <= gamma * n.ln() + 1e-9);
    }

    #[test]
    fn softmin_matches_naive_oracle_on_representable_cases(
        values in proptest::collection::vec(0.0f64..500.0, 2..12),
        gamma in 1.0f64..16.0,
    ) {
        // representable: |v|/gamma <= 500, exp never overflows/underflows
        // to a complete loss of the sum
        let naive = -gamma * values.iter().map(|v| (-v / gamma).exp()).sum::<f64>().ln();
        let stable = softmin(&values, gamma).unwrap();
        let rel = (stable - naive).abs() / naive.abs().max(1.0);
        prop_assert!(rel < 1e-12, "stable {stable} vs naive {naive}");
    }

    #[test]
    fn softmin_never_overflows(
        values in proptest::collection::vec(-1e6f64..1e6, 1..10),
        gamma in 1e-6f64..1e6,
    ) {
        let v = softmin(&values, gamma).unwrap();
        prop_assert!(v.is_finite());
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(v <= min + 1e-9);
    }

    #[test]
    fn translation_shifts_loss_leaves_weights(
        costs in costs_strategy(2),
        gamma in 0.1f64..32.0,
        delta in 0.0f64..1000.0,
    ) {
        let pc = make_pc(costs.clone(), 2);
        let shifted = make_pc(costs.iter().map(|c| c + delta).collect(), 2);
        let g = Gamma::new(gamma).unwrap();
        let a = prob_pit_loss(&pc, g).unwrap();
        let b = prob_pit_loss(&shifted, g).unwrap();
        prop_assert!((b.loss - a.loss - delta).abs() < 1e-8);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_decreasing_in_gamma(
        costs in proptest::collection::vec(0.0f64..10.0, 6..=6),
    ) {
        // Strictness is only observable while gamma * ln1p(rest) stays
        // above the ulp of the minimum cost; costs in [0, 10) with
        // gamma >= 0.5 keep every increment representable.
        let all_equal = costs.windows(2).all(|w| w[0] == w[1]);
        prop_assume!(!all_equal);
        let pc = make_pc(costs, 3);
        let mut prev = pit_loss(&pc).loss;
        for gamma in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let cur = prob_pit_loss(&pc, Gamma::new(gamma).unwrap()).unwrap().loss;
            prop_assert!(cur < prev, "not strictly decreasing at gamma {gamma}");
            prev = cur;
        }
    }
}
