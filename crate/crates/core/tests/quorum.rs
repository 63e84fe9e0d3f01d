use proptest::prelude::*;
use sitan_core::{quorum, FaultBudget};

#[test]
fn quorum_bounds_hold_for_every_size() {
    for n in 1..=100usize {
        let f = (n - 1) / 3;
        let b = FaultBudget::new(n, f).unwrap();
        let q = b.quorum();
        // two quorums share more than f members
        assert!(2 * q >= n + f + 1, "n={n}");
        assert!(2 * q > n + f && q <= n - f, "n={n}");
        assert_eq!(b.k_min(), q);
        assert_eq!(b.k_max(), n - f);
        // oracle: smallest k with 2k > n + f, by search
        let smallest = (0..=n).find(|k| 2 * k > n + f).unwrap();
        assert_eq!(q, smallest);
    }
}

#[test]
fn oversized_budget_is_rejected() {
    assert!(quorum(4, 2).is_err());
    assert!(FaultBudget::new(6, 2).is_err());
    assert!(FaultBudget::max_for(0).is_err());
    assert_eq!(FaultBudget::max_for(7).unwrap().f(), 2);
}

proptest! {
    #[test]
    fn any_valid_budget_intersects(f in 0usize..40, extra in 0usize..60) {
        let n = 3 * f + 1 + extra;
        let q = quorum(n, f).unwrap();
        prop_assert!(2 * q - n > f);
        prop_assert!(q <= n - f);
        prop_assert_eq!(FaultBudget::new(n, f).unwrap().min_group(), 3 * f + 1);
    }
}
