mod common;

use chaining::metric::greedy_net;
use chaining::{covering_number, packing_eps, DistanceSpec, GaugeOracle};
use proptest::prelude::*;

fn specs(dim: usize) -> Vec<DistanceSpec> {
    vec![
        DistanceSpec::L1,
        DistanceSpec::L2,
        DistanceSpec::Linf,
        DistanceSpec::Lp { p: 1.5 },
        DistanceSpec::Gauge {
            gauge: GaugeOracle::Ellipsoid {
                semiaxes: (0..dim).map(|i| 1.0 / (i + 1) as f64).collect(),
            },
        },
        DistanceSpec::TruncPhi { j: 1, r: 4.0 },
        DistanceSpec::TruncD { i: 1, r: 4.0, gamma_exp: 1.0 },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_symmetric_and_nonnegative(set in common::point_set(1..=5, 2..=6)) {
        for spec in specs(set.dim()) {
            for a in 0..set.card() {
                prop_assert_eq!(spec.between(&set, a, a), 0.0);
                for b in 0..set.card() {
                    let d = spec.between(&set, a, b);
                    prop_assert!(d >= 0.0);
                    prop_assert_eq!(d, spec.between(&set, b, a));
                }
            }
        }
    }

    #[test]
    fn truncated_phi_quasi_triangle(set in common::point_set(1..=6, 3..=6), j in -2i32..4, r in 2.0f64..16.0) {
        let spec = DistanceSpec::TruncPhi { j, r };
        for s in 0..set.card() {
            for t in 0..set.card() {
                for u in 0..set.card() {
                    let lhs = spec.between(&set, s, t);
                    let rhs = 4.0 * (spec.between(&set, s, u) + spec.between(&set, u, t));
                    prop_assert!(lhs <= rhs, "{lhs} > {rhs}");
                }
            }
        }
    }

    #[test]
    fn truncated_distance_shrinks_with_level(set in common::point_set(1..=6, 2..=6), r in 2.0f64..16.0, g in 0.5f64..3.0) {
        for a in 0..set.card() {
            for b in 0..set.card() {
                let l2 = DistanceSpec::L2.between(&set, a, b);
                let mut prev = f64::INFINITY;
                for i in -2..5 {
                    let d = DistanceSpec::TruncD { i, r, gamma_exp: g }.between(&set, a, b);
                    prop_assert!(d <= prev);
                    prop_assert!(d <= l2);
                    prev = d;
                }
            }
        }
    }

    #[test]
    fn cover_sandwich_and_valid_net(set in common::point_set(1..=4, 2..=30), eps in 0.01f64..2.0) {
        let ids = set.ids();
        for spec in specs(set.dim()).into_iter().take(5) {
            let c = covering_number(&set, &ids, &spec, eps);
            prop_assert!(c.lower <= c.upper);
            prop_assert!(c.lower >= 1 && c.upper <= set.card());
            let net = greedy_net(&set, &ids, &spec, eps);
            for &x in &ids {
                prop_assert!(net.iter().any(|&z| spec.between(&set, x, z) <= eps + 1e-12));
            }
        }
    }

    #[test]
    fn packing_eps_is_nonincreasing(set in common::point_set(1..=4, 2..=30)) {
        let ids = set.ids();
        for spec in [DistanceSpec::L2, DistanceSpec::Linf] {
            let mut prev = f64::INFINITY;
            for n in 1..=set.card() + 2 {
                let e = packing_eps(&set, &ids, &spec, n);
                prop_assert!(e <= prev, "n = {n}: {e} > {prev}");
                prev = e;
            }
        }
    }
}
