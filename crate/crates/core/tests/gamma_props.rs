mod common;

use chaining::gamma::{gamma_integral_at, gamma_value, GammaParams};
use chaining::{DiscreteMeasure, DistanceSpec, PointSet};
use proptest::prelude::*;

fn measure(weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::normalized(weights.iter().copied().enumerate()).unwrap()
}

fn instance() -> impl Strategy<Value = (PointSet, Vec<f64>)> {
    common::point_set(1..=4, 2..=10).prop_flat_map(|s| {
        let n = s.card();
        (Just(s), prop::collection::vec(0.01f64..1.0, n))
    })
}

/// `∫_0^∞ ε^{β-1} (log 1/μ(B(x,ε)))^{αβ} dε` by adaptive Simpson in `u = ε^β`
/// with brute-force ball masses.
fn quadrature(set: &PointSet, spec: &DistanceSpec, mu: &DiscreteMeasure, p: GammaParams, x: usize) -> f64 {
    let (a, b) = (p.alpha(), p.beta());
    let f = |u: f64| {
        let eps = u.powf(1.0 / b);
        let m: f64 = mu
            .atoms()
            .iter()
            .filter(|&&(y, _)| spec.between(set, x, y) <= eps)
            .map(|&(_, w)| w)
            .sum();
        if m >= 1.0 - 1e-12 {
            0.0
        } else {
            (-m.ln()).powf(a * b) / b
        }
    };
    let top = set.ids().iter().map(|&y| spec.between(set, x, y)).fold(0.0, f64::max);
    fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, flo: f64, fmid: f64, fhi: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (lo + hi);
        let (lm, rm) = (0.5 * (lo + mid), 0.5 * (mid + hi));
        let (flm, frm) = (f(lm), f(rm));
        let left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        let right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        simpson(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1)
            + simpson(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1)
    }
    let hi = top.powf(b) * (1.0 + 1e-9);
    let (flo, fmid, fhi) = (f(0.0), f(hi / 2.0), f(hi));
    let whole = hi / 6.0 * (flo + 4.0 * fmid + fhi);
    simpson(&f, 0.0, hi, flo, fmid, fhi, whole, 1e-10, 60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn closed_form_matches_quadrature((set, w) in instance(), a in 0.25f64..1.5, b in 0.5f64..2.5) {
        let mu = measure(&w);
        let p = GammaParams::new(a, b).unwrap();
        for spec in [DistanceSpec::L2, DistanceSpec::Linf] {
            for x in set.ids() {
                let exact = gamma_integral_at(&set, &spec, &mu, p, x);
                let quad = quadrature(&set, &spec, &mu, p, x);
                prop_assert!((exact - quad).abs() <= 1e-6 * exact.max(1.0), "{exact} vs {quad}");
            }
        }
    }

    #[test]
    fn moving_mass_towards_a_point_lowers_its_term((set, w) in instance(), t in 0.0f64..1.0) {
        let mu = measure(&w);
        let p = GammaParams::GAUSSIAN;
        for x in set.ids() {
            let shifted: Vec<f64> = w
                .iter()
                .enumerate()
                .map(|(y, &m)| (1.0 - t) * m / w.iter().sum::<f64>() + if y == x { t } else { 0.0 })
                .collect();
            let nu = measure(&shifted);
            let before = gamma_integral_at(&set, &DistanceSpec::L2, &mu, p, x);
            let after = gamma_integral_at(&set, &DistanceSpec::L2, &nu, p, x);
            prop_assert!(after <= before * (1.0 + 1e-12), "{after} > {before}");
        }
    }

    #[test]
    fn dominated_distance_gives_smaller_value((set, w) in instance(), i in -1i32..3, r in 2.0f64..8.0) {
        let mu = measure(&w);
        let p = GammaParams::GAUSSIAN;
        let l2 = gamma_value(&set, &DistanceSpec::L2, &mu, p).unwrap();
        let trunc = gamma_value(&set, &DistanceSpec::TruncD { i, r, gamma_exp: 1.0 }, &mu, p).unwrap();
        prop_assert!(trunc <= l2 * (1.0 + 1e-12));
    }

    #[test]
    fn homogeneous_in_scale((set, w) in instance(), c in 0.01f64..100.0, b in 0.5f64..3.0) {
        let mu = measure(&w);
        let p = GammaParams::new(0.5, b).unwrap();
        let g = gamma_value(&set, &DistanceSpec::L2, &mu, p).unwrap();
        let gc = gamma_value(&set.scaled(c), &DistanceSpec::L2, &mu, p).unwrap();
        prop_assert!((gc - c * g).abs() <= 1e-9 * c * g.max(1e-300), "{gc} vs {}", c * g);
    }
}

#[test]
fn two_points_hand_value() {
    // μ uniform on {0, 1} at distance 1: ∫_0^1 √(log 2) dε.
    let s = PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
    let mu = DiscreteMeasure::uniform(&[0, 1]).unwrap();
    let g = gamma_value(&s, &DistanceSpec::L2, &mu, GammaParams::GAUSSIAN).unwrap();
    approx::assert_abs_diff_eq!(g, 2f64.ln().sqrt(), epsilon = 1e-15);
    let dirac = DiscreteMeasure::dirac(0);
    assert_eq!(gamma_value(&s, &DistanceSpec::L2, &dirac, GammaParams::GAUSSIAN).unwrap(), f64::INFINITY);
}
