//! Increasing sequences of finite partitions of `0..card`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::{DistanceSpec, PointSet, BALL_TOL};

/// Partitions `levels[0]`, `levels[1]`, ... indexed from `start`, each refining
/// the previous one. Beyond the last level the last partition is repeated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionChain {
    pub start: i32,
    pub levels: Vec<Vec<Vec<usize>>>,
    #[serde(skip)]
    lookup: Vec<Vec<usize>>,
}

impl PartitionChain {
    /// Validates coverage, disjointness and nesting.
    pub fn new(card: usize, start: i32, levels: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("partition chain needs at least one level"));
        }
        let mut lookup = Vec::with_capacity(levels.len());
        for (depth, level) in levels.iter().enumerate() {
            let mut owner = vec![usize::MAX; card];
            for (c, cell) in level.iter().enumerate() {
                if cell.is_empty() {
                    return Err(invalid(format!("empty cell at level {}", start + depth as i32)));
                }
                for &x in cell {
                    if x >= card || owner[x] != usize::MAX {
                        return Err(invalid(format!(
                            "level {} is not a partition of {card} points",
                            start + depth as i32
                        )));
                    }
                    owner[x] = c;
                }
            }
            if owner.contains(&usize::MAX) {
                return Err(invalid(format!(
                    "level {} does not cover every point",
                    start + depth as i32
                )));
            }
            if let Some(prev) = lookup.last() {
                let prev: &Vec<usize> = prev;
                for cell in level {
                    let p = prev[cell[0]];
                    if cell.iter().any(|&x| prev[x] != p) {
                        return Err(invalid(format!(
                            "level {} does not refine the previous level",
                            start + depth as i32
                        )));
                    }
                }
            }
            lookup.push(owner);
        }
        Ok(PartitionChain {
            start,
            levels,
            lookup,
        })
    }

    /// The chain `{T}` at `start` followed by singletons.
    pub fn trivial_then_singletons(card: usize, start: i32) -> Result<Self> {
        PartitionChain::new(
            card,
            start,
            vec![vec![(0..card).collect()], (0..card).map(|i| vec![i]).collect()],
        )
    }

    pub fn card(&self) -> usize {
        self.lookup[0].len()
    }

    /// Last level stored explicitly.
    pub fn last(&self) -> i32 {
        self.start + self.levels.len() as i32 - 1
    }

    fn depth(&self, j: i32) -> usize {
        assert!(j >= self.start, "level {j} precedes the chain start {}", self.start);
        ((j - self.start) as usize).min(self.levels.len() - 1)
    }

    pub fn level(&self, j: i32) -> &[Vec<usize>] {
        &self.levels[self.depth(j)]
    }

    /// Index within `level(j)` of the cell holding `x`.
    pub fn cell_index(&self, j: i32, x: usize) -> usize {
        self.lookup[self.depth(j)][x]
    }

    /// The cell `C_j(x)`.
    pub fn cell(&self, j: i32, x: usize) -> &[usize] {
        let d = self.depth(j);
        &self.levels[d][self.lookup[d][x]]
    }

    /// Nested partitions from level `start`: every cell of the previous level
    /// is carved into balls `{t : d_j(y, t) ≤ ρ_j}` around its lowest remaining
    /// id `y`, where `(d_j, ρ_j) = level(j)`, until all cells are singletons.
    pub fn greedy_balls(set: &PointSet, start: i32, level: impl Fn(i32) -> (DistanceSpec, f64)) -> Result<Self> {
        let mut levels: Vec<Vec<Vec<usize>>> = Vec::new();
        let mut prev = vec![set.ids()];
        for j in start.. {
            let (spec, rad) = level(j);
            let mut next = Vec::new();
            for cell in &prev {
                let mut rest = cell.clone();
                while let Some(&y) = rest.first() {
                    let (piece, others): (Vec<usize>, Vec<usize>) =
                        rest.iter().partition(|&&t| spec.between(set, y, t) <= rad + BALL_TOL);
                    next.push(piece);
                    rest = others;
                }
            }
            let done = next.iter().all(|c| c.len() == 1);
            levels.push(next);
            if done {
                break;
            }
            if j - start > 400 {
                return Err(Error::Precondition("ball partitions do not separate the points".into()));
            }
            prev = levels.last().unwrap().clone();
        }
        PartitionChain::new(set.card(), start, levels)
    }

    /// Rebuilds the lookup tables after deserialization.
    pub fn reindex(self) -> Result<Self> {
        let card = self.levels[0].iter().map(Vec::len).sum();
        PartitionChain::new(card, self.start, self.levels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_nested_levels() {
        let bad = PartitionChain::new(3, 0, vec![vec![vec![0, 1], vec![2]], vec![vec![0], vec![1, 2]]]);
        assert!(bad.is_err());
        assert!(PartitionChain::new(3, 0, vec![vec![vec![0, 1]]]).is_err());
    }

    #[test]
    fn repeats_last_level() {
        let c = PartitionChain::trivial_then_singletons(3, 2).unwrap();
        assert_eq!(c.cell(2, 1), &[0, 1, 2]);
        assert_eq!(c.cell(3, 1), &[1]);
        assert_eq!(c.cell(40, 2), &[2]);
    }
}
