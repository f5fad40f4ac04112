use chaining::convex::{convex_pipeline, ellipsoid_lattice, phi_gauge, ConvexInstance, ConvexityCert};
use chaining::GaugeOracle;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translate_functional_grows_with_level(
        axes in prop::collection::vec(0.1f64..1.0, 1..=4),
        dir in prop::collection::vec(-1.0f64..1.0, 4),
        scale in 0.0f64..1.0,
        r in 4.0f64..16.0,
    ) {
        let b = GaugeOracle::Ellipsoid { semiaxes: axes.clone() };
        let u = GaugeOracle::euclidean(axes.len());
        let x: Vec<f64> = dir[..axes.len()].to_vec();
        let n = b.norm(&x);
        prop_assume!(n > 0.0);
        let x: Vec<f64> = x.iter().map(|v| v * scale / n).collect();
        let mut prev = 0.0;
        for k in -1..8 {
            let v = phi_gauge(&x, k, r, &b, &u).unwrap();
            prop_assert!(v >= prev - 1e-9, "k = {k}: {v} < {prev}");
            prop_assert!(v <= b.norm(&x) + 1e-9);
            prev = v;
        }
    }
}

#[test]
fn small_ellipsoids_meet_the_packing_bound() {
    for (axes, r) in [(vec![1.0, 0.5], 16.0), (vec![1.0, 0.7, 0.3], 8.0), (vec![0.8], 8.0)] {
        let (pts, _) = ellipsoid_lattice(&axes, 400).unwrap();
        let b = GaugeOracle::Ellipsoid { semiaxes: axes.clone() };
        let u = GaugeOracle::euclidean(axes.len());
        let res = convex_pipeline(&ConvexInstance {
            points: &pts,
            b: &b,
            u: &u,
            cert: ConvexityCert::for_ellipsoid(&axes).unwrap(),
            alpha: 0.5,
            beta: 2.0,
            r,
        })
        .unwrap();
        let rep = &res.report;
        assert!(rep.tree.passed(), "{:?}", rep.tree.failures);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks.failures().collect::<Vec<_>>());
        assert!(rep.packing_sum <= rep.packing_bound);
        assert!(rep.convexity.passed);
    }
}

#[test]
fn one_dimensional_ellipsoid_is_degenerate_but_valid() {
    let axes = [1.0];
    let (pts, _) = ellipsoid_lattice(&axes, 1).unwrap();
    assert_eq!(pts.card(), 1);
    let b = GaugeOracle::Ellipsoid { semiaxes: axes.to_vec() };
    let u = GaugeOracle::euclidean(1);
    let res = convex_pipeline(&ConvexInstance {
        points: &pts,
        b: &b,
        u: &u,
        cert: ConvexityCert::for_ellipsoid(&axes).unwrap(),
        alpha: 0.5,
        beta: 2.0,
        r: 8.0,
    })
    .unwrap();
    assert!(res.report.checks.all_passed());
    assert_eq!(res.report.gamma, 0.0);
}
