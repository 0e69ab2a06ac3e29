mod common;

use common::{linalg_instance, lstsq_instance};
use proptest::prelude::*;

#[test]
fn basis_suite_200_instances() {
    for seed in 0..200 {
        if let Err(e) = linalg_instance(seed) {
            panic!("instance {seed}: {e}");
        }
    }
}

#[test]
fn least_squares_suite_200_instances() {
    for seed in 0..200 {
        if let Err(e) = lstsq_instance(10_000 + seed) {
            panic!("instance {seed}: {e}");
        }
    }
}

proptest! {
    #[test]
    fn basis_properties(seed in any::<u64>()) {
        prop_assert_eq!(linalg_instance(seed), Ok(()));
    }

    #[test]
    fn least_squares_properties(seed in any::<u64>()) {
        prop_assert_eq!(lstsq_instance(seed), Ok(()));
    }
}
