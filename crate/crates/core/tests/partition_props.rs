mod common;

use chaining::measure::DiscreteMeasure;
use chaining::partition::{
    build_decreasing, build_tree, build_two_param, measure_constant, tree_to_measure, verify_tree, DecreasingInstance,
    DistanceFamily, LevelSetFunctional, LogPower, ScaledSquared, SyntheticPhi, TreeOptions, TwoParamInstance,
};
use chaining::{DistanceSpec, PointSet};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn synthetic_trees_meet_every_bound(set in common::point_set(1..=6, 2..=40), ri in 0usize..3) {
        let r = [4.0, 8.0, 16.0][ri];
        let theta = LogPower::sqrt_log(4.0);
        let phi = SyntheticPhi::build(&set, &DistanceSpec::L2, r, 1.0, &theta, None).unwrap();
        let tree = build_tree(&set, &DistanceSpec::L2, &phi, &theta, r, 1.0, TreeOptions::with_k0(phi.k0())).unwrap();
        let rep = verify_tree(&tree, &set, &DistanceSpec::L2, &phi, &theta).unwrap();
        prop_assert!(rep.passed(), "{:?}", rep.failures);
        prop_assert!(rep.max_sum <= rep.bound);

        let (mu, mrep) = tree_to_measure(&tree, 0.5, 1.0).unwrap();
        prop_assert!(mrep.ratio <= mrep.constant, "{} > {}", mrep.ratio, mrep.constant);
        prop_assert!(mrep.ratio <= 64.0);
        prop_assert!(mrep.level_weights_ok());
        prop_assert!(mu.atoms().iter().map(|a| a.1).sum::<f64>() <= 1.0 + 1e-9);
    }

    #[test]
    fn two_param_level_weights(set in common::point_set(1..=3, 2..=24), tau in 2u32..4) {
        let chain = common::greedy_chain(&set, &DistanceSpec::L2, 0, |j| 2f64.powi(-j));
        let nu = DiscreteMeasure::uniform(&set.ids()).unwrap();
        // φ_{j+1} = r^{1+δ} φ_j with r = 2^τ, δ = 1/2.
        let phi = ScaledSquared::new(&set, DistanceSpec::L2, 2f64.powf(1.5 * f64::from(tau)));
        let zero = |_: &[usize]| 0.0;
        let res = build_two_param(&TwoParamInstance {
            set: &set,
            phi: &phi,
            f: &zero,
            a_parts: &chain,
            nu: &nu,
            tau,
            delta: 0.5,
            alpha: 2.0,
            beta: 1.0,
            max_levels: 60,
        });
        let res = res.unwrap();
        for &(_, sum, bound) in &res.report.level_weights {
            prop_assert!(sum <= bound, "{sum} > {bound}");
        }
        prop_assert!(res.report.checks.all_passed(), "{:?}", res.report.checks.failures().collect::<Vec<_>>());
    }

    #[test]
    fn decreasing_builder_cells(xs in prop::collection::btree_set(0u32..4096, 2..30)) {
        let pts: Vec<f64> = xs.iter().map(|&x| f64::from(x) / 4096.0).collect();
        let inst = DecreasingInstance {
            card: pts.len(),
            dist: &Line(pts.clone()),
            f: &Spread(pts.clone()),
            r: 4.0,
            gamma_exp: 2.0,
            k2: 1.0,
            h: 10.0,
            max_levels: 40,
        };
        let res = build_decreasing(&inst).unwrap();
        for name in ["sibling-index uniqueness", "cell-diameter bound", "covering radius"] {
            prop_assert!(res.report.checks.failures().all(|c| c.name != name), "{name}");
        }
        prop_assert!(res.report.checks.all_passed());
    }
}

struct Line(Vec<f64>);

impl DistanceFamily for Line {
    fn dist(&self, _j: usize, s: usize, t: usize) -> f64 {
        (self.0[s] - self.0[t]).abs()
    }
}

struct Spread(Vec<f64>);

impl LevelSetFunctional for Spread {
    fn value(&self, _j: usize, ids: &[usize]) -> f64 {
        let lo = ids.iter().map(|&i| self.0[i]).fold(f64::INFINITY, f64::min);
        let hi = ids.iter().map(|&i| self.0[i]).fold(f64::NEG_INFINITY, f64::max);
        0.01 * (hi - lo)
    }
}

#[test]
fn measure_constant_is_below_64_for_small_alpha() {
    for r in [4.0, 8.0, 16.0, 64.0] {
        for alpha in [0.25, 0.5, 1.0] {
            let k = measure_constant(alpha, 1.0, r);
            assert!(k <= 64.0, "alpha {alpha}, r {r}: {k}");
        }
    }
}

#[test]
fn single_point_tree() {
    let set = PointSet::from_rows(vec![vec![0.3, 0.1]]).unwrap();
    let theta = LogPower::sqrt_log(4.0);
    let phi = SyntheticPhi::build(&set, &DistanceSpec::L2, 4.0, 1.0, &theta, None).unwrap();
    let tree = build_tree(&set, &DistanceSpec::L2, &phi, &theta, 4.0, 1.0, TreeOptions::default()).unwrap();
    let rep = verify_tree(&tree, &set, &DistanceSpec::L2, &phi, &theta).unwrap();
    assert!(rep.passed());
    assert_eq!(rep.max_sum, 0.0);
}
