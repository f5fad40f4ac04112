//! Interpolation measure: from a measure adapted to `‖·‖₂`-partitions of the
//! dual ball to one controlling `γ_1` for `‖·‖_∞`, through nets of every cell
//! at radii `2^{-n-p}`.

use serde::{Deserialize, Serialize};

use crate::chain::PartitionChain;
use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_value, GammaParams};
use crate::measure::DiscreteMeasure;
use crate::metric::{covering_number, diameter, greedy_net, DistanceSpec, PointSet, BALL_TOL};
use crate::partition::{tree_to_measure, PartitionTree, TreeCell, TreeLevel};
use crate::report::Checks;

/// Dyadic `‖·‖₂` partitions (cells of diameter `≤ 2^{-n}`) by greedy balls of
/// radius `2^{-n-1}` around the lowest remaining id, and the tree-weight measure.
pub fn dyadic_partitions(set: &PointSet) -> Result<(PartitionChain, DiscreteMeasure)> {
    let spec = DistanceSpec::L2;
    let ids = set.ids();
    let diam = diameter(set, &ids, &spec)?;
    let n0 = if diam > 0.0 { (-diam.log2()).floor() as i32 } else { 0 };
    let mut levels = vec![TreeLevel {
        k: n0,
        cells: vec![TreeCell {
            ids: ids.clone(),
            ell: 1,
            z: 0,
            parent: None,
        }],
    }];
    let mut k = n0;
    while levels.last().unwrap().cells.iter().any(|c| c.ids.len() > 1) {
        let radius = 2f64.powi(-k - 2);
        let mut next = Vec::new();
        for (p, cell) in levels.last().unwrap().cells.iter().enumerate() {
            let mut rest = cell.ids.clone();
            let mut ell = 0;
            while let Some(&y) = rest.first() {
                let (piece, others): (Vec<usize>, Vec<usize>) = rest
                    .iter()
                    .partition(|&&t| spec.between(set, y, t) <= radius + BALL_TOL);
                ell += 1;
                next.push(TreeCell {
                    ids: piece,
                    ell,
                    z: y,
                    parent: Some(p),
                });
                rest = others;
            }
        }
        k += 1;
        levels.push(TreeLevel { k, cells: next });
        if k > n0 + 200 {
            return Err(Error::Numerical("dyadic partitions did not separate points".into()));
        }
    }
    let tree = PartitionTree {
        r: 2.0,
        beta: 1.0,
        k0: n0,
        levels,
    };
    let (mu, _) = tree_to_measure(&tree, 0.5, 1.0)?;
    Ok((tree.to_chain()?, mu))
}

/// `α = max_ε ε √(log N(S, ε))` over `ε = 2^{-m}`, with greedy covering upper
/// bounds of a sample `S` of the `‖·‖₂` unit ball in coefficient coordinates.
pub fn estimate_alpha(b2_sample: &PointSet, spec: &DistanceSpec) -> Result<(f64, Vec<(f64, usize)>)> {
    let ids = b2_sample.ids();
    let diam = diameter(b2_sample, &ids, spec)?;
    let mut grid = Vec::new();
    let mut alpha: f64 = 0.0;
    if diam == 0.0 {
        return Ok((0.0, grid));
    }
    let mut eps = 2f64.powi(diam.log2().ceil() as i32);
    loop {
        let n = covering_number(b2_sample, &ids, spec, eps).upper;
        alpha = alpha.max(eps * (n as f64).ln().sqrt());
        grid.push((eps, n));
        if n == b2_sample.card() || grid.len() > 60 {
            break;
        }
        eps /= 2.0;
    }
    Ok((alpha, grid))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpReport {
    pub alpha: f64,
    pub p0: i32,
    /// Total mass placed before renormalization.
    pub total_mass: f64,
    /// `(level n, cell, p, smallest p' whose budget fits the net)` where the greedy net was too large.
    pub escalations: Vec<(i32, usize, i32, i32)>,
    /// `γ_1` for `‖·‖_∞` of the renormalized measure.
    pub gamma1_inf: f64,
    /// `sup_t Σ_n 2^{-n} √(log 1/μ(A_n(t)))`, tail included.
    pub entropy_sum: f64,
    /// `gamma1_inf / (α · entropy_sum)`.
    pub ratio: Option<f64>,
    pub checks: Checks,
}

/// `coeffs` holds the dual ball in coefficient coordinates `(x*(x_i))_i`;
/// `‖·‖₂` is Euclidean there and `‖·‖_∞` the max over coordinates.
pub fn interp_measure(
    coeffs: &PointSet,
    parts: &PartitionChain,
    mu: &DiscreteMeasure,
    alpha: f64,
) -> Result<(DiscreteMeasure, InterpReport)> {
    let card = coeffs.card();
    if parts.card() != card {
        return Err(Error::DimensionMismatch {
            expected: card,
            found: parts.card(),
        });
    }
    mu.check_support(card)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha must be a nonnegative number"));
    }
    let l2 = DistanceSpec::L2;
    let linf = DistanceSpec::Linf;
    let n0 = parts.start;
    let last = parts.last();
    for n in n0..=last {
        for (c, cell) in parts.level(n).iter().enumerate() {
            let d = diameter(coeffs, cell, &l2)?;
            if d > 2f64.powi(-n) + BALL_TOL {
                return Err(Error::Precondition(format!(
                    "cell {c} of level {n} has diameter {d} above {}",
                    2f64.powi(-n)
                )));
            }
        }
    }
    let mut checks = Checks::new();
    if card == 1 {
        return Ok((
            DiscreteMeasure::dirac(0),
            InterpReport {
                alpha,
                p0: 0,
                total_mass: 1.0,
                escalations: Vec::new(),
                gamma1_inf: 0.0,
                entropy_sum: 0.0,
                ratio: None,
                checks,
            },
        ));
    }
    if alpha == 0.0 {
        return Err(invalid("alpha vanishes on a set with several points"));
    }
    let p0 = (-alpha.log2()).ceil() as i32;
    let mut mass = vec![0.0; card];
    let mut escalations = Vec::new();
    for n in n0..=last {
        for (c, cell) in parts.level(n).iter().enumerate() {
            let m_a = mu.mass(cell);
            let mut p = p0;
            loop {
                let net = greedy_net(coeffs, cell, &linf, 2f64.powi(-n - p));
                let log_budget = alpha * alpha * 4f64.powi(p);
                let size = net.len() as f64;
                if size.ln() > log_budget {
                    let mut q = p;
                    while alpha * alpha * 4f64.powi(q) < size.ln() {
                        q += 1;
                    }
                    escalations.push((n, c, p, q));
                }
                let per_point = m_a
                    * 2f64.powi(-p + p0 - n + n0 - 2)
                    * (-log_budget).exp().min(1.0 / size);
                for &t in &net {
                    mass[t] += per_point;
                }
                if net.len() == cell.len() || p > p0 + 64 {
                    break;
                }
                p += 1;
            }
        }
    }
    let total: f64 = super::kahan(mass.iter().copied());
    checks.le("mass accounting", total, 1.0);
    let nu = DiscreteMeasure::normalized(mass.into_iter().enumerate())?;
    let gamma1_inf = gamma_value(coeffs, &linf, &nu, GammaParams::new(1.0, 1.0)?)?;
    let mut entropy_sum: f64 = 0.0;
    for x in 0..card {
        let mut s = 0.0;
        for n in n0..=last {
            let m = mu.mass(parts.cell(n, x));
            s += 2f64.powi(-n) * (1.0 / m).ln().max(0.0).sqrt();
        }
        let m = mu.mass(parts.cell(last, x));
        s += 2f64.powi(-last) * (1.0 / m).ln().max(0.0).sqrt();
        entropy_sum = entropy_sum.max(s);
    }
    let denom = alpha * entropy_sum;
    Ok((
        nu,
        InterpReport {
            alpha,
            p0,
            total_mass: total,
            escalations,
            gamma1_inf,
            entropy_sum,
            ratio: (denom > 0.0).then(|| gamma1_inf / denom),
            checks,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_trivial() {
        let s = PointSet::from_rows(vec![vec![0.2, 0.1]]).unwrap();
        let (chain, mu) = dyadic_partitions(&s).unwrap();
        let (_, rep) = interp_measure(&s, &chain, &mu, 0.5).unwrap();
        assert_eq!(rep.gamma1_inf, 0.0);
    }

    #[test]
    fn cross_polytope_mass_accounting() {
        // Dual of ℓ∞²: the ℓ1 unit ball, sampled on its boundary and centre.
        let mut rows = vec![vec![0.0, 0.0]];
        for i in 0..16 {
            let t = i as f64 / 16.0;
            rows.push(vec![t, 1.0 - t]);
            rows.push(vec![-t, t - 1.0]);
            rows.push(vec![1.0 - t, -t]);
            rows.push(vec![t - 1.0, t]);
        }
        let s = PointSet::from_rows(rows).unwrap();
        let (chain, mu) = dyadic_partitions(&s).unwrap();
        let (alpha, _) = estimate_alpha(&s, &DistanceSpec::Linf).unwrap();
        let (nu, rep) = interp_measure(&s, &chain, &mu, alpha).unwrap();
        assert!(rep.checks.all_passed());
        assert!(rep.total_mass <= 1.0);
        assert_eq!(nu.atoms().len(), s.card());
        assert!(rep.ratio.unwrap().is_finite());
    }
}
