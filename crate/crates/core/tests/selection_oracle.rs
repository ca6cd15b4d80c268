mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracles::{exhaustive_selection, SelectionCase, EXHAUSTIVE_SHAPES};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn matches_brute_force_up_to_ten_by_eight(seed in any::<u64>()) {
        let case = SelectionCase::random(&mut ChaCha8Rng::seed_from_u64(seed), 10, 8);
        let r = case.check();
        prop_assert!(r.is_ok(), "{}", r.unwrap_err());
    }
}

#[test]
fn exhaustive_on_small_matrices() {
    for (a, t) in EXHAUSTIVE_SHAPES {
        exhaustive_selection(a, t).unwrap();
    }
}
