mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scores_match_naive_oracle(inst in instance()) {
        check_oracle(&inst)?;
    }

    #[test]
    fn scores_stay_in_bounds(inst in instance()) {
        check_bounds(&inst)?;
    }

    #[test]
    fn out_party_weights_sum_to_one(inst in instance()) {
        check_weight_sum(&inst)?;
    }

    #[test]
    fn constant_sentiment_collapses(inst in constant_instance()) {
        check_collapse(&inst)?;
    }

    #[test]
    fn scores_scale_with_sentiment(inst in instance_with(2), c in -2i8..=2) {
        check_linearity(&inst, c)?;
    }

    #[test]
    fn parliament_is_convex_combination(inst in instance()) {
        check_convexity(&inst)?;
    }

    #[test]
    fn metrics_ignore_input_order(inst in coding_instance()) {
        check_permutation(&inst)?;
    }

    #[test]
    fn f1_is_harmonic_mean(o in outcomes()) {
        check_f1(&o)?;
    }

    #[test]
    fn sampler_contract(n in 0usize..3000, k in 0usize..400, seed in any::<u64>()) {
        check_sampler(n, k, seed)?;
    }
}
