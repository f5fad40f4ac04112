mod common;

use chaining::mc::{estimate_b, estimate_f_tau, estimate_g, BernoulliMode};
use chaining::PointSet;
use proptest::prelude::*;
use rand::Rng;

fn basis(n: usize) -> PointSet {
    PointSet::from_rows((0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect()).unwrap()
}

/// Mean of `max_t Σ ε_i t_i` over all sign patterns, straight from the definition.
fn brute_rademacher(set: &PointSet) -> f64 {
    let m = set.dim();
    let total = 1u64 << m;
    let mut acc = 0.0;
    for mask in 0..total {
        let best = set
            .points()
            .iter()
            .map(|t| t.iter().enumerate().map(|(i, v)| if mask >> i & 1 == 1 { -v } else { *v }).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        acc += best;
    }
    acc / total as f64
}

/// `E max(g1, g2, g3) = ∫ x · 3φ(x)Φ(x)² dx` on a fine grid, with `Φ` integrated alongside.
fn max_of_three_normals() -> f64 {
    let (lo, hi, n) = (-12.0f64, 12.0f64, 2_400_000usize);
    let h = (hi - lo) / n as f64;
    let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut cdf = 0.0;
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in 1..=n {
        let (a, b) = (lo + (k - 1) as f64 * h, lo + k as f64 * h);
        let mid = 0.5 * (a + b);
        // Simpson on each step for Φ, trapezoid for the outer integrand.
        cdf += h / 6.0 * (phi(a) + 4.0 * phi(mid) + phi(b));
        let cur = b * 3.0 * phi(b) * cdf * cdf;
        acc += 0.5 * h * (prev + cur);
        prev = cur;
    }
    acc
}

#[test]
fn two_basis_vectors_pin() {
    let e = estimate_g(&basis(2), 100_000, 11).unwrap();
    assert!(e.agrees(1.0 / std::f64::consts::PI.sqrt(), 3.0), "{e:?}");
}

#[test]
fn three_basis_vectors_pin() {
    let oracle = max_of_three_normals();
    let closed = 1.5 / std::f64::consts::PI.sqrt();
    assert!((oracle - closed).abs() < 1e-8, "{oracle} vs {closed}");
    let e = estimate_g(&basis(3), 100_000, 12).unwrap();
    assert!(e.agrees(closed, 3.0), "{e:?}");
}

#[test]
fn exact_enumeration_matches_definition_and_sampling() {
    let mut rng = common::rng(5);
    for k in 0..20 {
        let m = rng.random_range(1..=16);
        let card = rng.random_range(1..=12);
        let set = common::cube_cloud(&mut rng, m, card, 1.0);
        let exact = estimate_b(&set, 1, 0, BernoulliMode::Exact).unwrap();
        assert_eq!(exact.std_err, 0.0);
        if m <= 12 {
            let brute = brute_rademacher(&set);
            assert!((exact.mean - brute).abs() <= 1e-12 * brute.abs().max(1.0), "{} vs {brute}", exact.mean);
        }
        let mc = estimate_b(&set, 20_000, k, BernoulliMode::MonteCarlo).unwrap();
        assert!(mc.agrees(exact.mean, 4.0), "set {k}: {mc:?} vs {}", exact.mean);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn seeded_estimates_are_reproducible(set in common::point_set(1..=8, 1..=10), seed in any::<u64>()) {
        let a = estimate_g(&set, 500, seed).unwrap();
        let b = estimate_g(&set, 500, seed).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
        let a = estimate_b(&set, 500, seed, BernoulliMode::MonteCarlo).unwrap();
        let b = estimate_b(&set, 500, seed, BernoulliMode::MonteCarlo).unwrap();
        prop_assert_eq!(a, b);
        let a = estimate_f_tau(&set, 1.5, 200, seed).unwrap();
        let b = estimate_f_tau(&set, 1.5, 200, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn suprema_are_nonnegative_on_symmetric_sets(set in common::point_set(1..=8, 1..=6)) {
        let mut rows = set.points().to_vec();
        rows.extend(set.points().iter().map(|p| p.iter().map(|v| -v).collect()));
        let sym = PointSet::from_rows(rows).unwrap();
        prop_assert!(estimate_b(&sym, 1, 0, BernoulliMode::Exact).unwrap().mean >= 0.0);
        prop_assert!(estimate_g(&sym, 200, 1).unwrap().mean >= 0.0);
    }
}
