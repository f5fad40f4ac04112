//! Greedy partition tree driven by a level functional.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Growth, LevelFunctional, PartitionTree, TreeCell, TreeLevel};
use crate::error::{invalid, Error, Result};
use crate::metric::{diameter_unchecked, DistanceSpec, PointSet, BALL_TOL};

pub(crate) fn within(d: f64, radius: f64) -> bool {
    d <= radius + BALL_TOL
}

/// Largest integer `k` with `diam ≤ r^{-βk}` and `diam ≤ r^{-k}`; `0` for a
/// zero diameter. The second condition keeps every point within `r^{-k0}`
/// of the root centre when `β ≠ 1`.
pub fn default_k0(diam: f64, r: f64, beta: f64) -> i32 {
    if diam <= 0.0 {
        return 0;
    }
    let ok = |k: i32| diam <= r.powf(-beta * f64::from(k)) && diam <= r.powi(-k);
    let guess = (-(diam.ln()) / r.ln()).min(-(diam.ln()) / (beta * r.ln()));
    let mut k = guess.floor() as i32;
    while !ok(k) {
        k -= 1;
    }
    while ok(k + 1) {
        k += 1;
    }
    k
}

/// Build options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Overrides the starting level.
    pub k0: Option<i32>,
}

impl TreeOptions {
    pub fn with_k0(k0: i32) -> Self {
        TreeOptions { k0: Some(k0) }
    }
}

/// Level functional stored as a table `table[k - start][x]`, constant
/// outside the stored range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableFunctional {
    pub start: i32,
    pub table: Vec<Vec<f64>>,
}

impl TableFunctional {
    fn row(&self, k: i32) -> &[f64] {
        let d = (k - self.start).clamp(0, self.table.len() as i32 - 1) as usize;
        &self.table[d]
    }
}

impl LevelFunctional for TableFunctional {
    fn eval(&self, k: i32, x: usize) -> f64 {
        if k < self.start {
            return 0.0;
        }
        self.row(k)[x]
    }

    fn bound(&self) -> f64 {
        self.table
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// A level functional built so that the growth condition
/// `max_j φ_{k+2}(y_j) ≥ φ_k(x) + r^{-βk} θ(n)` holds for every `k ≥ k0`:
///
/// `φ_{k0} = φ_{k0+1} = 0`,
/// `φ_{k+2}(y) = max(φ_{k+1}(y), max_{d(x,y) ≤ r^{-k}} φ_k(x) + r^{-βk} θ(|B(x, r^{-k})|))`.
///
/// Once balls of radius `r^{-k}` are singletons the recursion is stationary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPhi {
    inner: TableFunctional,
}

impl SyntheticPhi {
    pub fn build(
        set: &PointSet,
        spec: &DistanceSpec,
        r: f64,
        beta: f64,
        theta: &dyn Growth,
        k0: Option<i32>,
    ) -> Result<Self> {
        let n = set.card();
        let dist: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| spec.between(set, i, j)).collect())
            .collect();
        let mut dmin = f64::INFINITY;
        let mut diam: f64 = 0.0;
        for (i, row) in dist.iter().enumerate() {
            for &d in &row[i + 1..] {
                dmin = dmin.min(d);
                diam = diam.max(d);
            }
        }
        if n > 1 && dmin <= BALL_TOL {
            return Err(Error::Precondition(
                "synthetic level functional needs distinct points".into(),
            ));
        }
        let k0 = k0.unwrap_or_else(|| default_k0(diam, r, beta));
        let mut table = vec![vec![0.0; n], vec![0.0; n]];
        if n > 1 {
            let mut k = k0;
            loop {
                let radius = r.powi(-k);
                let weight = r.powf(-beta * f64::from(k));
                let prev = &table[table.len() - 2];
                let last = &table[table.len() - 1];
                let gain: Vec<f64> = (0..n)
                    .map(|x| {
                        let count = dist[x].iter().filter(|&&d| within(d, radius)).count();
                        prev[x] + weight * theta.theta(count)
                    })
                    .collect();
                let next: Vec<f64> = (0..n)
                    .map(|y| {
                        (0..n)
                            .filter(|&x| within(dist[x][y], radius))
                            .fold(last[y], |m, x| m.max(gain[x]))
                    })
                    .collect();
                table.push(next);
                if !within(dmin, radius) && k > k0 {
                    break;
                }
                k += 1;
            }
        }
        Ok(SyntheticPhi {
            inner: TableFunctional { start: k0, table },
        })
    }

    pub fn k0(&self) -> i32 {
        self.inner.start
    }

    pub fn table(&self) -> &TableFunctional {
        &self.inner
    }
}

impl LevelFunctional for SyntheticPhi {
    fn eval(&self, k: i32, x: usize) -> f64 {
        self.inner.eval(k, x)
    }

    fn bound(&self) -> f64 {
        self.inner.bound()
    }
}

fn check_oracle(phi: &dyn LevelFunctional, k: i32, ids: &[usize], a: f64) -> Result<()> {
    let tol = 1e-12 * a.max(1.0);
    for &y in ids {
        let lo = phi.eval(k, y);
        let hi = phi.eval(k + 1, y);
        if !(lo >= 0.0) || lo > hi + tol {
            return Err(Error::Oracle(format!(
                "level functional not monotone at point {y}: level {k} gives {lo}, level {} gives {hi}",
                k + 1
            )));
        }
        if hi > a + tol {
            return Err(Error::Oracle(format!(
                "level functional exceeds its bound {a} at point {y}, level {}: {hi}",
                k + 1
            )));
        }
    }
    Ok(())
}

fn argmin(phi: &dyn LevelFunctional, k: i32, ids: &[usize]) -> usize {
    let mut best = ids[0];
    let mut best_v = phi.eval(k, best);
    for &y in &ids[1..] {
        let v = phi.eval(k, y);
        if v < best_v || (v == best_v && y < best) {
            best = y;
            best_v = v;
        }
    }
    best
}

/// Greedy construction: each cell of level `k` is carved into pieces
/// `C ∩ B(y_ℓ, r^{-k-1})` minus earlier balls, where `y_ℓ` minimizes
/// `φ_{k+2}` over what is left (lowest id on ties). The piece gets index `ℓ`
/// and centre `y_ℓ`. Stops once every cell is a singleton or `r^{-k}` drops
/// below `1e-9` times the diameter.
pub fn build_tree(
    set: &PointSet,
    spec: &DistanceSpec,
    phi: &dyn LevelFunctional,
    theta: &dyn Growth,
    r: f64,
    beta: f64,
    opts: TreeOptions,
) -> Result<PartitionTree> {
    if !(r >= 4.0) {
        return Err(invalid(format!("partition tree needs r >= 4, got {r}")));
    }
    if !(beta > 0.0) {
        return Err(invalid("partition tree needs beta > 0"));
    }
    if theta.theta(1) != 0.0 {
        return Err(invalid("growth function must vanish at 1"));
    }
    let ids = set.ids();
    let diam = diameter_unchecked(set, &ids, spec);
    let k0 = opts.k0.unwrap_or_else(|| default_k0(diam, r, beta));
    let a = phi.bound();
    check_oracle(phi, k0, &ids, a)?;
    check_oracle(phi, k0 + 1, &ids, a)?;
    let root = TreeCell {
        ids: ids.clone(),
        ell: 1,
        z: argmin(phi, k0 + 2, &ids),
        parent: None,
    };
    let mut levels = vec![TreeLevel {
        k: k0,
        cells: vec![root],
    }];
    let mut k = k0;
    loop {
        let current = levels.last().unwrap();
        if current.cells.iter().all(|c| c.ids.len() == 1) || r.powi(-k) < 1e-9 * diam || diam == 0.0 {
            break;
        }
        check_oracle(phi, k + 2, &ids, a)?;
        let radius = r.powi(-k - 1);
        let mut next = Vec::new();
        for (p, cell) in current.cells.iter().enumerate() {
            let mut remaining = cell.ids.clone();
            remaining.sort_unstable();
            let mut ell = 0;
            while !remaining.is_empty() {
                let y = argmin(phi, k + 2, &remaining);
                let (piece, rest): (Vec<usize>, Vec<usize>) = remaining
                    .iter()
                    .partition(|&&t| within(spec.between(set, y, t), radius));
                ell += 1;
                next.push(TreeCell {
                    ids: piece,
                    ell,
                    z: y,
                    parent: Some(p),
                });
                remaining = rest;
            }
        }
        k += 1;
        levels.push(TreeLevel { k, cells: next });
    }
    Ok(PartitionTree {
        r,
        beta,
        k0,
        levels,
    })
}

/// Which tree property a failure refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckKind {
    #[serde(rename = "chain-sum bound")]
    ChainSum,
    #[serde(rename = "cell-diameter bound")]
    CellDiameter,
    #[serde(rename = "covering radius")]
    CoveringRadius,
    #[serde(rename = "sibling-index uniqueness")]
    SiblingIndex,
    #[serde(rename = "partition structure")]
    Structure,
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CheckKind::ChainSum => "chain-sum bound",
            CheckKind::CellDiameter => "cell-diameter bound",
            CheckKind::CoveringRadius => "covering radius",
            CheckKind::SiblingIndex => "sibling-index uniqueness",
            CheckKind::Structure => "partition structure",
        };
        f.write_str(s)
    }
}

/// A violated tree property, located by level and cell index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub check: CheckKind,
    pub level: i32,
    pub cell: usize,
    pub detail: String,
}

/// Outcome of [`verify_tree`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    /// `max_x Σ_{k≥k0} r^{-βk} θ(ℓ_{k+1}(C_{k+1}(x)))`.
    pub max_sum: f64,
    pub witness: usize,
    /// `4A`.
    pub bound: f64,
    pub failures: Vec<Failure>,
}

impl TreeReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Per-point chain sums `Σ_{k≥k0} r^{-βk} θ(ℓ_{k+1}(C_{k+1}(x)))`.
pub fn chain_sums(tree: &PartitionTree, theta: &dyn Growth) -> Vec<f64> {
    let owners = tree.owners();
    let card = tree.card();
    (0..card)
        .map(|x| {
            let mut s = 0.0;
            for d in 1..tree.levels.len() {
                let k = tree.levels[d - 1].k;
                let cell = &tree.levels[d].cells[owners[d][x]];
                s += tree.r.powf(-tree.beta * f64::from(k)) * theta.theta(cell.ell);
            }
            s
        })
        .collect()
}

/// Re-checks the chain-sum bound `≤ 4A` (exactly), the cell diameter bound
/// `2r^{-k}`, the covering radius `r^{-k}` around each centre and distinct
/// sibling indices.
pub fn verify_tree(
    tree: &PartitionTree,
    set: &PointSet,
    spec: &DistanceSpec,
    phi: &dyn LevelFunctional,
    theta: &dyn Growth,
) -> Result<TreeReport> {
    let mut failures = Vec::new();
    if let Err(e) = tree.validate_shape() {
        failures.push(Failure {
            check: CheckKind::Structure,
            level: tree.k0,
            cell: 0,
            detail: e.to_string(),
        });
        return Ok(TreeReport {
            max_sum: f64::NAN,
            witness: 0,
            bound: 4.0 * phi.bound(),
            failures,
        });
    }
    if tree.card() != set.card() {
        return Err(Error::DimensionMismatch {
            expected: set.card(),
            found: tree.card(),
        });
    }
    for level in &tree.levels {
        let radius = tree.r.powi(-level.k);
        let mut sibling_ells: std::collections::HashMap<usize, Vec<(usize, usize)>> =
            std::collections::HashMap::new();
        for (c, cell) in level.cells.iter().enumerate() {
            let d = diameter_unchecked(set, &cell.ids, spec);
            if d > 2.0 * radius + 2.0 * BALL_TOL {
                failures.push(Failure {
                    check: CheckKind::CellDiameter,
                    level: level.k,
                    cell: c,
                    detail: format!("diameter {d} exceeds {}", 2.0 * radius),
                });
            }
            if !cell.ids.contains(&cell.z) {
                failures.push(Failure {
                    check: CheckKind::CoveringRadius,
                    level: level.k,
                    cell: c,
                    detail: format!("centre {} outside its cell", cell.z),
                });
            } else if let Some(&far) = cell
                .ids
                .iter()
                .find(|&&y| !within(spec.between(set, y, cell.z), radius))
            {
                failures.push(Failure {
                    check: CheckKind::CoveringRadius,
                    level: level.k,
                    cell: c,
                    detail: format!("point {far} farther than {radius} from centre {}", cell.z),
                });
            }
            if cell.ell == 0 {
                failures.push(Failure {
                    check: CheckKind::SiblingIndex,
                    level: level.k,
                    cell: c,
                    detail: "index must be at least 1".into(),
                });
            }
            if let Some(p) = cell.parent {
                sibling_ells.entry(p).or_default().push((cell.ell, c));
            }
        }
        let mut parents: Vec<_> = sibling_ells.into_iter().collect();
        parents.sort_by_key(|e| e.0);
        for (p, mut list) in parents {
            list.sort_unstable();
            for w in list.windows(2) {
                if w[0].0 == w[1].0 {
                    failures.push(Failure {
                        check: CheckKind::SiblingIndex,
                        level: level.k,
                        cell: w[1].1,
                        detail: format!(
                            "cells {} and {} under parent {p} share index {}",
                            w[0].1, w[1].1, w[0].0
                        ),
                    });
                }
            }
        }
    }
    let sums = chain_sums(tree, theta);
    let bound = 4.0 * phi.bound();
    let (witness, max_sum) = sums
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (x, s)| if s > acc.1 { (x, s) } else { acc });
    if max_sum > bound {
        let owners = tree.owners();
        let last = tree.levels.len() - 1;
        failures.push(Failure {
            check: CheckKind::ChainSum,
            level: tree.kmax(),
            cell: owners[last][witness],
            detail: format!("sum {max_sum} at point {witness} exceeds {bound}"),
        });
    }
    Ok(TreeReport {
        max_sum,
        witness,
        bound,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::LogPower;

    #[test]
    fn k0_examples() {
        assert_eq!(default_k0(1.0, 4.0, 1.0), 0);
        assert_eq!(default_k0(0.25, 4.0, 1.0), 1);
        assert_eq!(default_k0(0.3, 4.0, 1.0), 0);
        assert_eq!(default_k0(5.0, 4.0, 1.0), -2);
        assert_eq!(default_k0(0.0, 4.0, 1.0), 0);
    }

    #[test]
    fn two_point_hand_trace() {
        let s = PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let g = LogPower::sqrt_log(1.0);
        let phi = SyntheticPhi::build(&s, &DistanceSpec::L2, 4.0, 1.0, &g, None).unwrap();
        let tree = build_tree(&s, &DistanceSpec::L2, &phi, &g, 4.0, 1.0, TreeOptions::default()).unwrap();
        assert_eq!(tree.k0, 0);
        assert_eq!(tree.levels.len(), 2);
        let ells: Vec<usize> = tree.levels[1].cells.iter().map(|c| c.ell).collect();
        assert_eq!(ells, vec![1, 2]);
        let rep = verify_tree(&tree, &s, &DistanceSpec::L2, &phi, &g).unwrap();
        assert!(rep.passed());
        assert!((rep.max_sum - 2f64.ln().sqrt()).abs() < 1e-15);
        assert!(rep.max_sum <= 4.0 * phi.bound());
    }

    #[test]
    fn singleton_tree() {
        let s = PointSet::from_rows(vec![vec![2.0, 1.0]]).unwrap();
        let g = LogPower::sqrt_log(1.0);
        let phi = SyntheticPhi::build(&s, &DistanceSpec::L2, 4.0, 1.0, &g, None).unwrap();
        let tree = build_tree(&s, &DistanceSpec::L2, &phi, &g, 4.0, 1.0, TreeOptions::default()).unwrap();
        assert_eq!(tree.levels.len(), 1);
        assert_eq!(tree.levels[0].cells[0].ell, 1);
        let rep = verify_tree(&tree, &s, &DistanceSpec::L2, &phi, &g).unwrap();
        assert_eq!(rep.max_sum, 0.0);
    }

    #[test]
    fn tampered_indices_are_reported() {
        let s = PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let g = LogPower::sqrt_log(1.0);
        let phi = SyntheticPhi::build(&s, &DistanceSpec::L2, 4.0, 1.0, &g, None).unwrap();
        let mut tree = build_tree(&s, &DistanceSpec::L2, &phi, &g, 4.0, 1.0, TreeOptions::default()).unwrap();
        tree.levels[1].cells[1].ell = 1;
        let rep = verify_tree(&tree, &s, &DistanceSpec::L2, &phi, &g).unwrap();
        assert!(rep.failures.iter().any(|f| f.check == CheckKind::SiblingIndex));
    }

    #[test]
    fn non_monotone_oracle_is_rejected() {
        let s = PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let bad = TableFunctional {
            start: 0,
            table: vec![vec![1.0, 1.0], vec![0.0, 0.0]],
        };
        let g = LogPower::sqrt_log(1.0);
        let err = build_tree(&s, &DistanceSpec::L2, &bad, &g, 4.0, 1.0, TreeOptions::default());
        assert!(matches!(err, Err(Error::Oracle(_))));
    }
}
