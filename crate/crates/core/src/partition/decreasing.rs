//! Partitions for a decreasing sequence of distances `d_j` and functionals `F_j`.
//!
//! Each cell carries a level index `i(C) ≤ k`: it is split with the greedy
//! scheme for `d_{i(C)}`, and either keeps its index (case a) or resets it to
//! `k + 1` (case b) depending on how much the functional drops.

use serde::{Deserialize, Serialize};

use super::tree::within;
use super::{tree_to_measure, DistanceFamily, LevelSetFunctional, PartitionTree, TreeCell, TreeLevel};
use crate::chain::PartitionChain;
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::report::Checks;

pub struct DecreasingInstance<'a> {
    pub card: usize,
    pub dist: &'a dyn DistanceFamily,
    pub f: &'a dyn LevelSetFunctional,
    pub r: f64,
    pub gamma_exp: f64,
    pub k2: f64,
    pub h: f64,
    pub max_levels: usize,
}

/// Per-cell bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreasingCell {
    pub ids: Vec<usize>,
    /// Level index `i(C)`.
    pub i: usize,
    pub ell: usize,
    pub a: f64,
    /// Centre `y` with `C ⊂ B_{i(C)}(y, r^{-k})`.
    pub center: usize,
    pub parent: Option<usize>,
    /// Set when the cell came out of case a.
    pub kept_index: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreasingReport {
    /// `sup_x Σ_{k≥0} r^{-k} √(log 1/μ(C_k(x)))`, tail included.
    pub measure_sum: f64,
    pub h: f64,
    /// `sup_x Σ_{k≥1} r^{-k} √(log ℓ(C_k(x)))`.
    pub index_sum: f64,
    /// Bound on `index_sum` from summing the per-level descent.
    pub index_bound: f64,
    pub l_param: f64,
    pub case_a: usize,
    pub case_b: usize,
    pub checks: Checks,
    /// Properties that rely on the growth hypothesis (noise margin 3 SE).
    pub logged: Checks,
    pub truncated: bool,
}

impl DecreasingReport {
    pub fn within_h(&self) -> bool {
        self.measure_sum <= self.h
    }
}

pub struct DecreasingResult {
    pub chain: PartitionChain,
    pub cells: Vec<Vec<DecreasingCell>>,
    pub measure: DiscreteMeasure,
    pub report: DecreasingReport,
}

fn ball(inst: &DecreasingInstance, i: usize, within_ids: &[usize], y: usize, radius: f64) -> Vec<usize> {
    within_ids
        .iter()
        .copied()
        .filter(|&s| within(inst.dist.dist(i, y, s), radius))
        .collect()
}

/// Slack schedule `ε_k = min(F_0(T), 2^{-k-2})`: at most `F_0(T)`, summing to at most 1/2.
pub fn slack(f0: f64, k: usize) -> f64 {
    f0.min(2f64.powi(-(k as i32) - 2))
}

pub fn build_decreasing(inst: &DecreasingInstance) -> Result<DecreasingResult> {
    let card = inst.card;
    if card == 0 {
        return Err(Error::EmptySet);
    }
    let (r, gamma, k2, h) = (inst.r, inst.gamma_exp, inst.k2, inst.h);
    if r < 4.0 {
        return Err(invalid(format!("r must be at least 4, got {r}")));
    }
    if !(gamma > 1.0) {
        return Err(invalid(format!("gamma exponent must exceed 1, got {gamma}")));
    }
    if !(k2 > 0.0 && h > 0.0) {
        return Err(invalid("K2 and H must be positive"));
    }
    let all: Vec<usize> = (0..card).collect();
    let sample: Vec<usize> = all.iter().copied().take(200).collect();
    let mut d0: f64 = 0.0;
    for (a, &s) in sample.iter().enumerate() {
        for &t in &sample[a + 1..] {
            d0 = d0.max(inst.dist.dist(0, s, t));
            for j in 0..4 {
                if inst.dist.dist(j + 1, s, t) > inst.dist.dist(j, s, t) * (1.0 + 1e-12) + 1e-15 {
                    return Err(Error::Precondition(format!(
                        "distances increase from level {j} to {} at ({s}, {t})",
                        j + 1
                    )));
                }
            }
        }
    }
    if card <= 200 && d0 > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!("level-0 diameter {d0} exceeds 1")));
    }
    let f0 = inst.f.value(0, &all);
    if f0 > 1.0 / h {
        return Err(Error::Precondition(format!("F_0(T) = {f0} exceeds 1/H = {}", 1.0 / h)));
    }
    let l_param = 2.0 * r.powf(1.0 / (gamma - 1.0));
    let c_desc = 2.0 / (k2 * (2.0 + l_param));
    let se = |j: usize, ids: &[usize]| 3.0 * inst.f.std_err(j, ids);

    let mut cells: Vec<Vec<DecreasingCell>> = vec![vec![DecreasingCell {
        ids: all.clone(),
        i: 0,
        ell: 1,
        a: 0.0,
        center: 0,
        parent: None,
        kept_index: true,
    }]];
    let mut checks = Checks::new();
    let mut logged = Checks::new();
    let (mut case_a, mut case_b) = (0, 0);
    let mut slack_total = 0.0;
    let mut truncated = false;
    loop {
        let k = cells.len() - 1;
        let current = &cells[k];
        if current.iter().all(|c| c.ids.len() == 1) {
            break;
        }
        if cells.len() > inst.max_levels {
            truncated = true;
            break;
        }
        let eps_k = slack(f0, k);
        slack_total += eps_k;
        let rk = r.powi(-(k as i32));
        let mut next = Vec::new();
        for (c_idx, c) in current.iter().enumerate() {
            let i = c.i;
            let f_c = inst.f.value(i, &c.ids);
            logged.le_detail(
                "index drop",
                (l_param / 2.0).powi((k - i) as i32) * r.powi(-(i as i32)),
                f_c - c.a + se(i, &c.ids),
                || format!("level {k} cell {c_idx}"),
            );
            let mut g: Vec<usize> = c.ids.clone();
            let mut ell = 0;
            let mut tops = Vec::new();
            while !g.is_empty() {
                ell += 1;
                let mut best = g[0];
                let mut best_v = f64::NEG_INFINITY;
                for &y in &g {
                    let v = inst.f.value(i, &ball(inst, i, &c.ids, y, rk / (r * r)));
                    if v > best_v {
                        best_v = v;
                        best = y;
                    }
                }
                tops.push(best_v);
                let v_ids = ball(inst, i, &g, best, rk / r);
                g.retain(|x| !v_ids.contains(x));
                // Radius in d_i, hence in every d_k with k ≥ i.
                let spread = v_ids
                    .iter()
                    .map(|&s| inst.dist.dist(i, best, s))
                    .fold(0.0, f64::max);
                checks.le_detail("covering radius", spread, rk / r + 1e-12, || {
                    format!("level {} cell {ell} of parent {c_idx}", k + 1)
                });
                let d_v = v_ids
                    .iter()
                    .map(|&y| inst.f.value(i, &ball(inst, i, &v_ids, y, rk / (r * r))))
                    .fold(0.0, f64::max);
                let f_v = inst.f.value(i, &v_ids);
                let noise = se(i, &v_ids) + se(i, &c.ids);
                let min_top = tops.iter().copied().fold(f64::INFINITY, f64::min);
                logged.le(
                    "greedy value order",
                    best_v,
                    min_top + eps_k,
                );
                if (ell as f64).ln().sqrt() * r.powf(-2.0 * i as f64 * gamma) <= rk || ell == 1 {
                    logged.le(
                        "local value drop",
                        d_v + r.powi(-(k as i32)) / k2 * (ell as f64).ln().sqrt(),
                        f_c + 2.0 * eps_k + noise,
                    );
                }
                let threshold = (l_param / 2.0).powi((k + 1 - i) as i32) * r.powi(-(i as i32));
                let (new_i, a_v, kept) = if f_v - d_v - noise >= threshold {
                    case_a += 1;
                    (i, d_v, true)
                } else {
                    case_b += 1;
                    let fk = inst.f.value(k + 1, &v_ids);
                    (k + 1, fk - rk / r, false)
                };
                let lhs_f = inst.f.value(new_i, &v_ids);
                logged.le_detail(
                    "level descent",
                    lhs_f + a_v + c_desc * rk * (ell as f64).ln().sqrt(),
                    f_c + c.a + 2.0 * rk + 2.0 * eps_k + 2.0 * noise,
                    || format!("level {} cell {ell} of parent {c_idx}", k + 1),
                );
                next.push(DecreasingCell {
                    ids: v_ids,
                    i: new_i,
                    ell,
                    a: a_v,
                    center: best,
                    parent: Some(c_idx),
                    kept_index: kept,
                });
            }
        }
        cells.push(next);
    }

    // Structural assertions on every cell.
    for (k, level) in cells.iter().enumerate() {
        let rk = r.powi(-(k as i32));
        let mut seen: std::collections::HashSet<(usize, usize)> = Default::default();
        for (ci, c) in level.iter().enumerate() {
            checks.holds("level index bound", c.i <= k, || format!("level {k} cell {ci}"));
            if let Some(p) = c.parent {
                checks.holds("sibling-index uniqueness", seen.insert((p, c.ell)), || {
                    format!("level {k} cell {ci}")
                });
            }
            let mut diam: f64 = 0.0;
            for (a, &s) in c.ids.iter().enumerate() {
                for &t in &c.ids[a + 1..] {
                    diam = diam.max(inst.dist.dist(k, s, t));
                }
            }
            if k > 0 || card <= 200 {
                checks.le_detail("cell-diameter bound", diam, 2.0 * rk + 1e-12, || {
                    format!("level {k} cell {ci}")
                });
            }
        }
    }

    let tree = PartitionTree {
        r,
        beta: 1.0,
        k0: 0,
        levels: cells
            .iter()
            .enumerate()
            .map(|(k, l)| TreeLevel {
                k: k as i32,
                cells: l
                    .iter()
                    .map(|c| TreeCell {
                        ids: c.ids.clone(),
                        ell: c.ell,
                        z: c.center,
                        parent: c.parent,
                    })
                    .collect(),
            })
            .collect(),
    };
    let (measure, mrep) = tree_to_measure(&tree, 0.5, 1.0)?;
    let chain = tree.to_chain()?;
    // mrep.index_sum weights ℓ(C_{k+1}) by r^{-k}; rescale to r^{-k-1}.
    let index_sum = mrep.index_sum / r;
    let index_bound = (f0 + 1.0 + 2.0 * r / (r - 1.0) + 2.0 * slack_total) / (c_desc * r);
    logged.le("summed index bound", index_sum, index_bound);
    Ok(DecreasingResult {
        chain,
        cells,
        measure,
        report: DecreasingReport {
            measure_sum: mrep.measure_sum,
            h,
            index_sum,
            index_bound,
            l_param,
            case_a,
            case_b,
            checks,
            logged,
            truncated,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

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
    fn slack_schedule_sums_below_one() {
        let s: f64 = (0..60).map(|k| slack(0.3, k)).sum();
        assert!(s <= 0.5 + 1e-12);
        assert!(slack(0.01, 0) == 0.01);
    }

    #[test]
    fn grid_partitions_are_valid() {
        let pts: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let inst = DecreasingInstance {
            card: 9,
            dist: &Line(pts.clone()),
            f: &Spread(pts),
            r: 4.0,
            gamma_exp: 2.0,
            k2: 1.0,
            h: 10.0,
            max_levels: 30,
        };
        let res = build_decreasing(&inst).unwrap();
        assert!(res.report.checks.all_passed(), "{:?}", res.report.checks.failures().collect::<Vec<_>>());
        assert!(!res.report.truncated);
        assert_eq!(res.chain.level(res.chain.last()).len(), 9);
        assert!(res.report.measure_sum.is_finite());
    }

    #[test]
    fn rejects_large_functional() {
        let pts = vec![0.0, 1.0];
        let inst = DecreasingInstance {
            card: 2,
            dist: &Line(pts.clone()),
            f: &Spread(pts),
            r: 4.0,
            gamma_exp: 2.0,
            k2: 1.0,
            h: 1000.0,
            max_levels: 30,
        };
        assert!(matches!(build_decreasing(&inst), Err(Error::Precondition(_))));
    }
}
