//! Empirical comparisons between Rademacher and Gaussian suprema, and the
//! separated-family growth check for `b`.

use serde::{Deserialize, Serialize};

use super::{estimate_b_ids, sup_draws, BernoulliMode, Estimate, Noise};
use crate::error::{invalid, Result};
use crate::metric::{DistanceSpec, PointSet};
use crate::report::Checks;

/// Two-block witness `T ⊂ U + u B_1` with `Ĝ(U) ≤ u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    /// Coordinates with `|t_i| ≤ threshold` go to `U`, the rest to the `ℓ1` part.
    pub threshold: f64,
    pub g_small: f64,
    pub l1_large: f64,
    /// `max(Ĝ(U), sup ‖t - u_t‖₁)`.
    pub u: f64,
    /// `b̂ / u`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub b_hat: Estimate,
    pub g_hat: Estimate,
    pub sup_l1: f64,
    /// `b̂ / Ĝ`, absent when `Ĝ = 0`.
    pub b_over_g: Option<f64>,
    pub interpolation: Interpolation,
    pub checks: Checks,
}

fn split(set: &PointSet, c: f64) -> (PointSet, f64) {
    let mut l1: f64 = 0.0;
    let small: Vec<Vec<f64>> = set
        .points()
        .iter()
        .map(|p| {
            let mut big = 0.0;
            let row = p
                .iter()
                .map(|&v| {
                    if v.abs() <= c {
                        v
                    } else {
                        big += v.abs();
                        0.0
                    }
                })
                .collect();
            l1 = l1.max(big);
            row
        })
        .collect();
    (PointSet::new(set.dim(), small).expect("same shape"), l1)
}

pub fn check_comparisons(set: &PointSet, n_samples: usize, seed: u64) -> Result<ComparisonReport> {
    let ids = set.ids();
    let b_hat = estimate_b_ids(set, &ids, n_samples, seed, BernoulliMode::Auto)?;
    let g_draws = sup_draws(set, &ids, &Noise::Gaussian, n_samples, seed)?;
    let g_hat = Estimate::from_samples(&g_draws, seed);
    let sup_l1 = set
        .points()
        .iter()
        .map(|p| p.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut checks = Checks::new();
    checks.le("rademacher below l1 radius", b_hat.mean, sup_l1 + 3.0 * b_hat.std_err);

    // Thresholds at the distinct magnitudes (thinned to at most 64), plus 0.
    let mut mags: Vec<f64> = set.points().iter().flatten().map(|v| v.abs()).collect();
    mags.push(0.0);
    mags.sort_by(f64::total_cmp);
    mags.dedup();
    let step = mags.len().div_ceil(64).max(1);
    let mut grid: Vec<f64> = mags.iter().copied().step_by(step).collect();
    if grid.last() != mags.last() {
        grid.push(*mags.last().unwrap());
    }
    let mut best: Option<Interpolation> = None;
    for &c in &grid {
        let (small, l1) = split(set, c);
        let g_small = if c == 0.0 {
            0.0
        } else {
            Estimate::from_samples(&sup_draws(&small, &ids, &Noise::Gaussian, n_samples, seed)?, seed).mean
        };
        let u = g_small.max(l1);
        if best.as_ref().is_none_or(|b| u < b.u) {
            best = Some(Interpolation {
                threshold: c,
                g_small,
                l1_large: l1,
                u,
                ratio: if u > 0.0 { b_hat.mean / u } else { 0.0 },
            });
        }
    }
    let interpolation = best.expect("grid is nonempty");
    Ok(ComparisonReport {
        b_over_g: (g_hat.mean != 0.0).then(|| b_hat.mean / g_hat.mean),
        b_hat,
        g_hat,
        sup_l1,
        interpolation,
        checks,
    })
}

/// Separated family `t_ℓ` with subsets `A_ℓ` near each `t_ℓ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub n: usize,
    /// Realized `max ‖t_ℓ - t_ℓ'‖_∞`, `min ‖t_ℓ - t_ℓ'‖₂`, `max_ℓ sup_{A_ℓ} ‖· - t_ℓ‖₂`.
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    /// Hypotheses `σ ≤ b/K₁` and `a ≤ 2b/√log N`.
    pub hypotheses_hold: bool,
    pub union_b: Estimate,
    pub min_piece_b: f64,
    /// `b √log N / (b̂(∪A_ℓ) - min b̂(A_ℓ))`, the constant the growth bound needs.
    pub realized_k: f64,
}

/// Evaluates the lower bound `b(∪A_ℓ) ≥ K⁻¹ b √log N + min b(A_ℓ)` on a
/// given family. `sets[ℓ]` are ids into `pieces`; `centers` has one row per `ℓ`.
pub fn growth_check(
    centers: &PointSet,
    pieces: &PointSet,
    sets: &[Vec<usize>],
    k1: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    let n = centers.card();
    if sets.len() != n || n < 2 {
        return Err(invalid("growth check needs one piece per centre and at least two centres"));
    }
    if !(k1 > 0.0) {
        return Err(invalid("K1 must be positive"));
    }
    let (mut a, mut b): (f64, f64) = (0.0, f64::INFINITY);
    for s in 0..n {
        for t in (s + 1)..n {
            a = a.max(DistanceSpec::Linf.between(centers, s, t));
            b = b.min(DistanceSpec::L2.between(centers, s, t));
        }
    }
    let mut sigma: f64 = 0.0;
    for (l, ids) in sets.iter().enumerate() {
        if ids.is_empty() {
            return Err(invalid(format!("piece {l} is empty")));
        }
        for &x in ids {
            sigma = sigma.max(DistanceSpec::L2.eval(centers.point(l), pieces.point(x)));
        }
    }
    let log_n = (n as f64).ln();
    let hypotheses_hold = sigma <= b / k1 && a <= 2.0 * b / log_n.sqrt();
    let union: Vec<usize> = {
        let mut u: Vec<usize> = sets.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    let union_b = estimate_b_ids(pieces, &union, n_samples, seed, BernoulliMode::Auto)?;
    let mut min_piece_b = f64::INFINITY;
    for ids in sets {
        min_piece_b = min_piece_b.min(estimate_b_ids(pieces, ids, n_samples, seed, BernoulliMode::Auto)?.mean);
    }
    let gap = union_b.mean - min_piece_b;
    Ok(GrowthReport {
        n,
        a,
        b,
        sigma,
        hypotheses_hold,
        union_b,
        min_piece_b,
        realized_k: if gap > 0.0 { b * log_n.sqrt() / gap } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_unit_is_equality_case() {
        let s = PointSet::from_rows(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let r = check_comparisons(&s, 2000, 1).unwrap();
        assert_eq!(r.b_hat.mean, 1.0);
        assert_eq!(r.sup_l1, 1.0);
        assert!(r.checks.all_passed());
        assert!(r.interpolation.u <= 1.0);
    }

    #[test]
    fn growth_on_signed_basis() {
        // Centres ±e_ℓ, pieces are the centres themselves.
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|l| (0..8).map(|i| if i == l { 1.0 } else { 0.0 }).collect())
            .collect();
        let c = PointSet::from_rows(rows).unwrap();
        let sets: Vec<Vec<usize>> = (0..8).map(|l| vec![l]).collect();
        let r = growth_check(&c, &c, &sets, 8.0, 1000, 2).unwrap();
        assert_eq!(r.sigma, 0.0);
        assert!((r.b - 2f64.sqrt()).abs() < 1e-12);
        assert!(r.realized_k.is_finite());
    }
}
