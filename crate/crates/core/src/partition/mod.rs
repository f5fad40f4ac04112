//! Partition trees and the measures they induce.

mod decreasing;
mod measure;
mod tree;
mod two_param;

pub use decreasing::{build_decreasing, DecreasingInstance, DecreasingReport, DecreasingResult};
pub use measure::{measure_constant, tree_to_measure, MeasureReport};
pub use tree::{
    build_tree, chain_sums, default_k0, verify_tree, CheckKind, Failure, SyntheticPhi, TableFunctional, TreeOptions,
    TreeReport,
};
pub use two_param::{build_two_param, TwoParamInstance, TwoParamReport, TwoParamResult};

use serde::{Deserialize, Serialize};

use crate::chain::PartitionChain;
use crate::error::{invalid, Result};
use crate::metric::{DistanceSpec, PointSet};

/// Level functionals `φ_k(x)`, nondecreasing in `k` and bounded by `bound()`.
pub trait LevelFunctional: Sync {
    fn eval(&self, k: i32, x: usize) -> f64;
    fn bound(&self) -> f64;
}

/// Growth function `θ(n)` with `θ(1) = 0`, nondecreasing, unbounded.
pub trait Growth: Sync {
    fn theta(&self, n: usize) -> f64;
}

impl<F: Fn(usize) -> f64 + Sync> Growth for F {
    fn theta(&self, n: usize) -> f64 {
        self(n)
    }
}

/// `θ(n) = scale · (ln n)^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPower {
    pub scale: f64,
    pub power: f64,
}

impl LogPower {
    pub fn new(scale: f64, power: f64) -> Self {
        LogPower { scale, power }
    }

    /// `θ(n) = √(log n) / k`.
    pub fn sqrt_log(k: f64) -> Self {
        LogPower::new(1.0 / k, 0.5)
    }
}

impl Growth for LogPower {
    fn theta(&self, n: usize) -> f64 {
        if n <= 1 {
            0.0
        } else {
            self.scale * (n as f64).ln().powf(self.power)
        }
    }
}

/// Pair functionals `φ_j(s, t)`, symmetric, growing with `j`.
pub trait PairFamily: Sync {
    fn phi(&self, j: i32, s: usize, t: usize) -> f64;
}

/// `φ_j(s, t) = rate^j · d(s, t)²`.
pub struct ScaledSquared<'a> {
    set: &'a PointSet,
    spec: DistanceSpec,
    rate: f64,
}

impl<'a> ScaledSquared<'a> {
    pub fn new(set: &'a PointSet, spec: DistanceSpec, rate: f64) -> Self {
        ScaledSquared { set, spec, rate }
    }
}

impl PairFamily for ScaledSquared<'_> {
    fn phi(&self, j: i32, s: usize, t: usize) -> f64 {
        let d = self.spec.between(self.set, s, t);
        self.rate.powi(j) * d * d
    }
}

/// Monotone set functional, possibly a Monte Carlo estimate.
pub trait SetFunctional: Sync {
    fn value(&self, ids: &[usize]) -> f64;
    /// Standard error of [`SetFunctional::value`]; zero when exact.
    fn std_err(&self, _ids: &[usize]) -> f64 {
        0.0
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync> SetFunctional for F {
    fn value(&self, ids: &[usize]) -> f64 {
        self(ids)
    }
}

/// Distances `d_j`, nonincreasing in `j`.
pub trait DistanceFamily: Sync {
    fn dist(&self, j: usize, s: usize, t: usize) -> f64;
}

/// Functionals `F_j`, nonincreasing in `j` and monotone in the set.
pub trait LevelSetFunctional: Sync {
    fn value(&self, j: usize, ids: &[usize]) -> f64;
    fn std_err(&self, _j: usize, _ids: &[usize]) -> f64 {
        0.0
    }
}

/// One cell of a partition tree level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeCell {
    pub ids: Vec<usize>,
    /// Rank at which the cell was carved out of its parent (starting at 1).
    pub ell: usize,
    /// Distinguished point; every member lies within `r^{-k}` of it.
    pub z: usize,
    /// Index of the parent cell in the previous level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub k: i32,
    pub cells: Vec<TreeCell>,
}

/// Increasing partitions `C_{k0}, C_{k0+1}, ...` with indices and centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub r: f64,
    pub beta: f64,
    pub k0: i32,
    pub levels: Vec<TreeLevel>,
}

impl PartitionTree {
    pub fn card(&self) -> usize {
        self.levels[0].cells.iter().map(|c| c.ids.len()).sum()
    }

    pub fn kmax(&self) -> i32 {
        self.levels.last().map(|l| l.k).unwrap_or(self.k0)
    }

    /// For each level, the index of the cell holding each point.
    pub fn owners(&self) -> Vec<Vec<usize>> {
        let card = self.card();
        self.levels
            .iter()
            .map(|l| {
                let mut o = vec![usize::MAX; card];
                for (c, cell) in l.cells.iter().enumerate() {
                    for &x in &cell.ids {
                        if x < card {
                            o[x] = c;
                        }
                    }
                }
                o
            })
            .collect()
    }

    pub fn to_chain(&self) -> Result<PartitionChain> {
        PartitionChain::new(
            self.card(),
            self.k0,
            self.levels
                .iter()
                .map(|l| l.cells.iter().map(|c| c.ids.clone()).collect())
                .collect(),
        )
    }

    /// Checks structural sanity only (levels consecutive, ids in range, parents set).
    pub fn validate_shape(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(invalid("tree has no levels"));
        }
        if self.levels[0].k != self.k0 || self.levels[0].cells.len() != 1 {
            return Err(invalid("first tree level must be the single cell at k0"));
        }
        for (d, l) in self.levels.iter().enumerate() {
            if l.k != self.k0 + d as i32 {
                return Err(invalid("tree levels must be consecutive"));
            }
            if d > 0 && l.cells.iter().any(|c| c.parent.is_none()) {
                return Err(invalid(format!("level {} has a cell without parent", l.k)));
            }
        }
        self.to_chain().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_power_vanishes_at_one() {
        let g = LogPower::sqrt_log(4.0);
        assert_eq!(g.theta(1), 0.0);
        assert!((g.theta(2) - 2f64.ln().sqrt() / 4.0).abs() < 1e-15);
        assert!(g.theta(3) > g.theta(2));
    }
}
