//! Partitions of `U + r^{-i} B_1` and `U + B_{p,∞}` built from partitions of
//! `U`, which show the split constructions lose only constants.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::pseq::{pseq_build, pseq_constant, PSeq};
use super::split::weak_lp_norm;
use crate::chain::PartitionChain;
use crate::error::{invalid, Error, Result};
use crate::gamma::{theta_value, ThetaInstance};
use crate::measure::DiscreteMeasure;
use crate::metric::{diameter_unchecked, DistanceSpec, PointSet};
use crate::report::Checks;

/// Sample points `t = x + y` given as `(id of x in U, y)`.
pub type Samples = [(usize, Vec<f64>)];

fn sample_points(u: &PointSet, samples: &Samples, scale: f64) -> Result<PointSet> {
    if samples.is_empty() {
        return Err(Error::EmptySet);
    }
    let rows = samples
        .iter()
        .map(|(x, y)| {
            if *x >= u.card() {
                return Err(invalid(format!("sample base {x} outside {} points", u.card())));
            }
            if y.len() != u.dim() {
                return Err(Error::DimensionMismatch {
                    expected: u.dim(),
                    found: y.len(),
                });
            }
            Ok(u.point(*x).iter().zip(y).map(|(a, b)| a + scale * b).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    PointSet::from_rows(rows)
}

/// Groups sample ids by key, cells ordered by first appearance.
fn group<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> Vec<Vec<usize>> {
    let mut index: HashMap<K, usize> = HashMap::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    for (s, k) in keys.enumerate() {
        let c = *index.entry(k).or_insert_with(|| {
            cells.push(Vec::new());
            cells.len() - 1
        });
        cells[c].push(s);
    }
    cells
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseL1Report {
    pub i: i32,
    pub r: f64,
    /// Last level stored; the partition is constant beyond it.
    pub last: i32,
    /// Size functional of the given partitions of `U`.
    pub theta_u: f64,
    /// Size functional of the product partitions of the samples.
    pub theta: f64,
    /// `theta / r^{-i}`.
    pub realized_k: f64,
    pub k_r: f64,
    /// `max D_j(C) / (D_j(A) + r^{3q/2})` over product cells.
    pub cell_constant: f64,
    /// Per level: distinct profile prefixes, their bound `n_1 3^{j-i}`, and `(K(r)(j-i+1))^{j-i}`.
    pub prefixes: Vec<(i32, usize, f64, f64)>,
    pub checks: Checks,
}

pub struct ConverseL1Result {
    pub points: PointSet,
    pub chain: PartitionChain,
    pub measure: DiscreteMeasure,
    pub report: ConverseL1Report,
}

/// Product partitions `C(A, q̄)` of the samples `t = x + r^{-i} y` (`y` in the
/// `ℓ1` unit ball): same cell of `U` and same profile prefix `p_1..p_{j-i+1}(y)`.
pub fn converse_l1(
    u: &PointSet,
    chain: &PartitionChain,
    nu: &DiscreteMeasure,
    r: f64,
    samples: &Samples,
) -> Result<ConverseL1Result> {
    if chain.card() != u.card() {
        return Err(Error::DimensionMismatch {
            expected: u.card(),
            found: chain.card(),
        });
    }
    nu.check_support(u.card())?;
    if !(r >= 4.0) {
        return Err(invalid(format!("r must be at least 4, got {r}")));
    }
    let i = chain.start;
    let points = sample_points(u, samples, r.powi(-i))?;
    let mut checks = Checks::new();
    let seqs: Vec<PSeq> = samples
        .iter()
        .map(|(_, y)| {
            let (s, rep) = pseq_build(y, r)?;
            checks.extend(rep.checks);
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let horizon = seqs.iter().map(PSeq::horizon).max().unwrap_or(1) as i32;
    let last = chain.last().max(i + horizon);
    let depth = (last - i + 1) as usize;
    let prefixes: Vec<Vec<i32>> = seqs.iter().map(|s| s.p_prefix(depth)).collect();

    let n = samples.len();
    let mut levels = Vec::with_capacity(depth);
    for j in i..=last {
        let len = (j - i + 1) as usize;
        levels.push(group(
            (0..n).map(|s| (chain.cell_index(j, samples[s].0), prefixes[s][..len].to_vec())),
        ));
    }
    let cchain = PartitionChain::new(n, i, levels)?;

    let k_r = pseq_constant(r);
    let mut cell_constant: f64 = 0.0;
    let mut prefix_counts = Vec::new();
    let n_first = {
        let top = ((k_r.ln() / r.ln() + 1.0) / 1.5).floor() as i32;
        (top + 2 + 1).max(0) as f64
    };
    for j in i..=last {
        let len = (j - i + 1) as usize;
        let spec = DistanceSpec::TruncPhi { j, r };
        for (s, (_, y)) in samples.iter().enumerate() {
            let scaled: Vec<f64> = y.iter().map(|v| r.powi(-i) * v).collect();
            let phi = spec.eval(&scaled, &vec![0.0; y.len()]);
            let cap = 2.0 * r.powf(1.5 * f64::from(prefixes[s][len - 1]));
            checks.le_detail("scaled remainder functional", phi, cap, || format!("sample {s} level {j}"));
        }
        for cell in cchain.level(j) {
            let s0 = cell[0];
            let a = chain.cell(j, samples[s0].0);
            let d_a = diameter_unchecked(u, a, &spec);
            let d_c = diameter_unchecked(&points, cell, &spec);
            let q = r.powf(1.5 * f64::from(prefixes[s0][len - 1]));
            checks.le_detail("product cell functional", d_c, 2.0 * d_a + 16.0 * q, || {
                format!("level {j} cell holding sample {s0}")
            });
            cell_constant = cell_constant.max(d_c / (d_a + q));
        }
        let mut distinct: Vec<&[i32]> = prefixes.iter().map(|p| &p[..len]).collect();
        distinct.sort_unstable();
        distinct.dedup();
        for p in &distinct {
            let s: f64 = p
                .iter()
                .enumerate()
                .map(|(m, &q)| r.powf(1.5 * f64::from(q) - (m + 1) as f64))
                .sum();
            checks.le("admissible prefix", s, k_r);
        }
        let bound = n_first * 3f64.powi(j - i);
        checks.le_detail("prefix count", distinct.len() as f64, bound, || format!("level {j}"));
        let geometric_count = (k_r * len as f64).powi(j - i);
        prefix_counts.push((j, distinct.len(), bound, geometric_count));
    }

    // Mass ν(A) 2^{-(j-i+1)} / N_j(A) on each product cell, the last level taking the rest.
    let mut atoms = Vec::new();
    for j in i..=last {
        let level = cchain.level(j);
        let mut per_a: HashMap<usize, usize> = HashMap::new();
        for cell in level {
            *per_a.entry(chain.cell_index(j, samples[cell[0]].0)).or_default() += 1;
        }
        let w = if j == last {
            2f64.powi(-(j - i))
        } else {
            2f64.powi(-(j - i + 1))
        };
        for cell in level {
            let a_idx = chain.cell_index(j, samples[cell[0]].0);
            let mass = nu.mass(&chain.level(j)[a_idx]) * w / per_a[&a_idx] as f64;
            atoms.push((cell[0], mass));
        }
    }
    let measure = DiscreteMeasure::normalized(atoms)?;
    let theta = theta_value(&ThetaInstance {
        set: &points,
        r,
        chain: &cchain,
        mu: &measure,
    })?
    .value;
    let theta_u = theta_value(&ThetaInstance { set: u, r, chain, mu: nu })?.value;
    Ok(ConverseL1Result {
        points,
        chain: cchain,
        measure,
        report: ConverseL1Report {
            i,
            r,
            last,
            theta_u,
            theta,
            realized_k: theta / r.powi(-i),
            k_r,
            cell_constant,
            prefixes: prefix_counts,
            checks,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseWeakReport {
    pub p: f64,
    pub gamma_exp: f64,
    /// `max d_j(f, 0)² / r^{-2j}` over samples and levels; at most `2/(2-p)`.
    pub layer_ratio: f64,
    /// `max diam_j(C) / r^{-j}` over the cells of the sample partitions.
    pub diam_ratio: f64,
    pub checks: Checks,
}

/// Cells `{t = x + f : x ∈ A}` for the samples `f` in the weak-`ℓp` unit ball,
/// with the distances `d_j(f, g) = (Σ min((f-g)², r^{-4γj}))^{1/2}`, `γ = 1/(2-p)`.
pub fn converse_weak_lp(
    u: &PointSet,
    chain: &PartitionChain,
    r: f64,
    p: f64,
    samples: &Samples,
) -> Result<(PointSet, PartitionChain, ConverseWeakReport)> {
    if chain.card() != u.card() {
        return Err(Error::DimensionMismatch {
            expected: u.card(),
            found: chain.card(),
        });
    }
    if !(1.0..2.0).contains(&p) {
        return Err(invalid(format!("p must lie in [1, 2), got {p}")));
    }
    if !(r > 1.0) {
        return Err(invalid(format!("r must exceed 1, got {r}")));
    }
    for (s, (_, f)) in samples.iter().enumerate() {
        let w = weak_lp_norm(f, p);
        if !(w <= 1.0 + 1e-12) {
            return Err(Error::Precondition(format!("sample {s} has weak norm {w} above 1")));
        }
    }
    let gamma = 1.0 / (2.0 - p);
    let points = sample_points(u, samples, 1.0)?;
    let n = samples.len();
    let levels = (chain.start..=chain.last())
        .map(|j| group((0..n).map(|s| chain.cell_index(j, samples[s].0))))
        .collect();
    let cchain = PartitionChain::new(n, chain.start, levels)?;
    let mut checks = Checks::new();
    let factor = 2.0 / (2.0 - p);
    let (mut layer_ratio, mut diam_ratio): (f64, f64) = (0.0, 0.0);
    for j in chain.start..=chain.last() {
        let spec = DistanceSpec::TruncD { i: j, r, gamma_exp: gamma };
        let scale = r.powi(-j);
        let mut reach: f64 = 0.0;
        for (s, (_, f)) in samples.iter().enumerate() {
            let d = spec.eval(f, &vec![0.0; f.len()]);
            checks.le_detail("layer-cake bound", d * d, factor * scale * scale, || format!("sample {s} level {j}"));
            layer_ratio = layer_ratio.max(d * d / (scale * scale));
            reach = reach.max(d);
        }
        for cell in cchain.level(j) {
            let a = chain.cell(j, samples[cell[0]].0);
            let d_a = diameter_unchecked(u, a, &spec);
            let d_c = diameter_unchecked(&points, cell, &spec);
            checks.le_detail("sample cell diameter", d_c, d_a + 2.0 * reach, || format!("level {j}"));
            checks.le_detail("sample cell diameter bound", d_c, d_a + 2.0 * factor.sqrt() * scale, || {
                format!("level {j}")
            });
            diam_ratio = diam_ratio.max(d_c / scale);
        }
    }
    Ok((
        points,
        cchain,
        ConverseWeakReport {
            p,
            gamma_exp: gamma,
            layer_ratio,
            diam_ratio,
            checks,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point_u() -> (PointSet, PartitionChain, DiscreteMeasure) {
        let u = PointSet::from_rows(vec![vec![0.0, 0.0], vec![0.5, 0.25]]).unwrap();
        let chain = PartitionChain::trivial_then_singletons(2, 0).unwrap();
        (u, chain, DiscreteMeasure::uniform(&[0, 1]).unwrap())
    }

    #[test]
    fn zero_offsets_reduce_to_u() {
        let (u, chain, nu) = two_point_u();
        let samples = vec![(0, vec![0.0, 0.0]), (1, vec![0.0, 0.0])];
        let res = converse_l1(&u, &chain, &nu, 4.0, &samples).unwrap();
        assert_eq!(res.chain.level(1), &[vec![0], vec![1]]);
        assert!(res.report.checks.all_passed(), "{:?}", res.report.checks);
    }

    #[test]
    fn small_instance_enumeration() {
        let (u, chain, nu) = two_point_u();
        let ys = [vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, -0.5], vec![0.0625, 0.0]];
        let samples: Vec<(usize, Vec<f64>)> =
            (0..2).flat_map(|x| ys.iter().map(move |y| (x, y.clone()))).collect();
        let res = converse_l1(&u, &chain, &nu, 4.0, &samples).unwrap();
        assert!(res.report.checks.all_passed(), "{:?}", res.report.checks);
        // Level 0 splits by profile only: the four offsets have distinct p_1.
        let p1: Vec<i32> = ys.iter().map(|y| pseq_build(y, 4.0).unwrap().0.p(1)).collect();
        let mut d = p1.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(res.chain.level(0).len(), d.len());
        assert!(res.report.realized_k.is_finite());
    }

    #[test]
    fn weak_samples() {
        let (u, chain, _) = two_point_u();
        let edge = 2f64.powf(-1.0 / 1.5);
        let samples = vec![(0, vec![0.0, 0.0]), (0, vec![1.0, edge]), (1, vec![1.0, 0.0])];
        let (_, c, rep) = converse_weak_lp(&u, &chain, 4.0, 1.5, &samples).unwrap();
        assert_eq!(c.level(0).len(), 1);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks);
        assert!(rep.layer_ratio <= 4.0);
    }

    #[test]
    fn profile_grid_layer_cake() {
        // f(k) = k^{-1/p} on 64 coordinates is extremal for the weak norm.
        let p = 1.5;
        let f: Vec<f64> = (1..=64).map(|k| (k as f64).powf(-1.0 / p)).collect();
        assert!((weak_lp_norm(&f, p) - 1.0).abs() < 1e-12);
        let u = PointSet::from_rows(vec![vec![0.0; 64]]).unwrap();
        let chain = PartitionChain::new(1, 0, vec![vec![vec![0]]; 3]).unwrap();
        let (_, _, rep) = converse_weak_lp(&u, &chain, 4.0, p, &[(0, f)]).unwrap();
        assert!(rep.checks.all_passed(), "{:?}", rep.checks);
    }
}
