mod common;

use chaining::bernoulli::{pseq_build, split_into_l1, split_into_weak_lp, ChainMaps, InterpMap, InterpOracle};
use chaining::chain::PartitionChain;
use chaining::partition::DistanceFamily;
use chaining::{DiscreteMeasure, DistanceSpec, PointSet};
use proptest::prelude::*;
use rand::Rng;

fn failures(c: &chaining::report::Checks) -> Vec<String> {
    c.failures().map(|f| format!("{}: {} > {} {}", f.name, f.lhs, f.rhs, f.detail)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l1_split_invariants(seed in any::<u64>(), dim in 1usize..8, card in 1usize..24, ri in 0usize..2, i in 0i32..2, consistent in any::<bool>()) {
        let r: f64 = [4.0, 8.0][ri];
        let mut rng = common::rng(seed);
        let set = common::cube_cloud(&mut rng, dim, card, r.powi(-i) / 4.0);
        let rad = (dim as f64 / 2.0).max(0.5);
        let chain = PartitionChain::greedy_balls(&set, i, |j| (DistanceSpec::TruncPhi { j, r }, rad)).unwrap();
        let maps = if consistent { ChainMaps::consistent(chain) } else { ChainMaps::lowest(chain) };
        let mu = DiscreteMeasure::uniform(&set.ids()).unwrap();
        let (res, rep) = split_into_l1(&set, &maps, &mu, r, i).unwrap();
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
        for x in 0..set.card() {
            for w in 0..dim {
                prop_assert_eq!(res.v[x][w], set.point(x)[w] - res.u[x][w]);
            }
        }
        prop_assert!(rep.l1_max <= 8.0 * r * rep.theta * (1.0 + 1e-12));
    }

    #[test]
    fn weak_split_invariants(seed in any::<u64>(), dim in 1usize..8, card in 1usize..24, ri in 0usize..2, pi in 0usize..3) {
        let r: f64 = [4.0, 8.0][ri];
        let p = [1.0, 1.25, 1.5][pi];
        let mut rng = common::rng(seed);
        let set = common::cube_cloud(&mut rng, dim, card, 0.25);
        let chain = common::greedy_chain(&set, &DistanceSpec::L2, 0, |j| r.powi(-j) / 2.0);
        let maps = ChainMaps::consistent(chain);
        let mu = DiscreteMeasure::uniform(&set.ids()).unwrap();
        let (_, rep) = split_into_weak_lp(&set, &maps, &mu, r, p, 1.0).unwrap();
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
        prop_assert!(rep.weak_max <= rep.k_weak);
    }

    #[test]
    fn profile_sequences(seed in any::<u64>(), len in 1usize..40, ri in 0usize..3) {
        let r = [4.0, 8.0, 16.0][ri];
        let mut rng = common::rng(seed);
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0) * rng.random::<f64>().powi(4)).collect();
        let l1: f64 = raw.iter().map(|v| v.abs()).sum();
        let y: Vec<f64> = raw.iter().map(|v| v / l1.max(1.0)).collect();
        let (_, rep) = pseq_build(&y, r).unwrap();
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
        prop_assert!(rep.sum <= rep.k_r);
    }

    #[test]
    fn truncated_family_decreases(seed in any::<u64>(), dim in 1usize..6, card in 2usize..10, base in 2u64..17) {
        let mut rng = common::rng(seed);
        let rows: Vec<Vec<f64>> = (0..card).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let set = PointSet::from_rows(rows).unwrap();
        let oracle = InterpOracle::new(&set, base, 5, 10, seed).unwrap();
        for s in 0..card {
            for t in 0..card {
                let mut prev = f64::INFINITY;
                for j in 0..=oracle.max_level() {
                    let d = oracle.dist(j, s, t);
                    prop_assert!(d <= prev * (1.0 + 1e-12), "level {j}: {d} > {prev}");
                    prev = d;
                }
            }
        }
    }
}

#[test]
fn first_level_map_contracts() {
    let mut rng = common::rng(42);
    for base in [2u64, 4, 16, 256] {
        let map = InterpMap::new(base, 1).unwrap();
        for _ in 0..10_000 {
            let (x, y) = (rng.random::<f64>(), rng.random::<f64>());
            let (fx, fy) = (map.apply(x).unwrap(), map.apply(y).unwrap());
            let lhs: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b).abs()).sum();
            assert!(lhs <= (x - y).abs() + 1e-12, "base {base}: {lhs} > {}", (x - y).abs());
        }
    }
}
