//! Group instances: the translates `t ↦ (f(tx))_x` of a function on a finite
//! group and the entropy sum for the truncated distances
//! `d_i(s,t)² = Σ_x min(2^{-4i}, (f(sx) - f(tx))²)`.

use serde::{Deserialize, Serialize};

use super::{estimate_b_ids, BernoulliMode, Estimate};
use crate::error::{invalid, Result};
use crate::metric::{covering_number, DistanceSpec, PointSet};

/// Cayley table `mul[a][b] = a·b` on `{0, …, n-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupTable {
    mul: Vec<Vec<usize>>,
    identity: usize,
}

impl TryFrom<Vec<Vec<usize>>> for GroupTable {
    type Error = crate::Error;

    fn try_from(mul: Vec<Vec<usize>>) -> Result<Self> {
        GroupTable::new(mul)
    }
}

impl From<GroupTable> for Vec<Vec<usize>> {
    fn from(g: GroupTable) -> Self {
        g.mul
    }
}

impl GroupTable {
    /// Validates closure, associativity, identity and inverses.
    pub fn new(mul: Vec<Vec<usize>>) -> Result<Self> {
        let n = mul.len();
        if n == 0 {
            return Err(invalid("group table is empty"));
        }
        if mul.iter().any(|row| row.len() != n || row.iter().any(|&v| v >= n)) {
            return Err(invalid("group table is not a closed square table"));
        }
        let identity = (0..n)
            .find(|&e| (0..n).all(|a| mul[e][a] == a && mul[a][e] == a))
            .ok_or_else(|| invalid("group table has no identity"))?;
        for a in 0..n {
            if !(0..n).any(|b| mul[a][b] == identity && mul[b][a] == identity) {
                return Err(invalid(format!("element {a} has no inverse")));
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if mul[mul[a][b]][c] != mul[a][mul[b][c]] {
                        return Err(invalid(format!("not associative at ({a}, {b}, {c})")));
                    }
                }
            }
        }
        Ok(GroupTable { mul, identity })
    }

    pub fn cyclic(n: usize) -> Result<Self> {
        Self::new((0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect())
    }

    /// Dihedral group of order `2n`: element `(k, s)` is `ρ^k σ^s`, encoded `2k + s`.
    pub fn dihedral(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("dihedral group needs n >= 1"));
        }
        let enc = |k: usize, s: usize| 2 * k + s;
        let mul = (0..2 * n)
            .map(|x| {
                let (k1, s1) = (x / 2, x % 2);
                (0..2 * n)
                    .map(|y| {
                        let (k2, s2) = (y / 2, y % 2);
                        // σ ρ^k = ρ^{-k} σ
                        let k = if s1 == 0 { (k1 + k2) % n } else { (k1 + n - k2 % n) % n };
                        enc(k, s1 ^ s2)
                    })
                    .collect()
            })
            .collect();
        Self::new(mul)
    }

    pub fn order(&self) -> usize {
        self.mul.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a][b]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// Rademacher mean of `sup_t |Σ_x ε_x f(tx)|` before normalization.
    pub b_raw: Estimate,
    /// Factor applied to `f`.
    pub scale: f64,
    /// Per level `(i, covering upper bound at radius 2^{-i})`.
    pub levels: Vec<(i32, usize)>,
    /// `Σ_{i ≤ i_max} 2^{-i} √(log N(G, d_i, 2^{-i}))`.
    pub sum: f64,
}

/// Normalizes `f` so that `Ê sup_t |Σ_x ε_x f(tx)| = 1` (when nonzero) and
/// evaluates the entropy sum with covering upper bounds.
pub fn group_check(group: &GroupTable, f: &[f64], i_max: i32, n_samples: usize, seed: u64) -> Result<GroupReport> {
    let n = group.order();
    if f.len() != n {
        return Err(crate::Error::DimensionMismatch {
            expected: n,
            found: f.len(),
        });
    }
    if f.iter().any(|v| !(v.abs() <= 1.0)) {
        return Err(invalid("function values must lie in [-1, 1]"));
    }
    if i_max < 0 {
        return Err(invalid("i_max must be nonnegative"));
    }
    let translates = |scale: f64| -> Result<PointSet> {
        PointSet::from_rows(
            (0..n)
                .map(|t| (0..n).map(|x| scale * f[group.mul(t, x)]).collect())
                .collect(),
        )
    };
    // Absolute values: the set of translates and their negatives.
    let signed = {
        let base = translates(1.0)?;
        let mut rows = base.points().to_vec();
        rows.extend(base.points().iter().map(|p| p.iter().map(|v| -v).collect()));
        PointSet::from_rows(rows)?
    };
    let b_raw = estimate_b_ids(&signed, &signed.ids(), n_samples, seed, BernoulliMode::Auto)?;
    let scale = if b_raw.mean > 0.0 { 1.0 / b_raw.mean } else { 1.0 };
    let set = translates(scale)?;
    let ids = set.ids();
    let mut levels = Vec::new();
    let mut sum = 0.0;
    for i in 0..=i_max {
        let spec = DistanceSpec::TruncD {
            i,
            r: 2.0,
            gamma_exp: 1.0,
        };
        let cover = covering_number(&set, &ids, &spec, 2f64.powi(-i)).upper;
        sum += 2f64.powi(-i) * (cover as f64).ln().sqrt();
        levels.push((i, cover));
    }
    Ok(GroupReport {
        b_raw,
        scale,
        levels,
        sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_validate() {
        assert_eq!(GroupTable::cyclic(2).unwrap().order(), 2);
        assert_eq!(GroupTable::dihedral(3).unwrap().order(), 6);
        assert!(GroupTable::new(vec![vec![0, 1], vec![0, 1]]).is_err());
        // Dihedral groups of order ≥ 6 are not commutative.
        let d = GroupTable::dihedral(3).unwrap();
        assert_ne!(d.mul(2, 1), d.mul(1, 2));
    }

    #[test]
    fn two_element_hand_value() {
        let g = GroupTable::cyclic(2).unwrap();
        let r = group_check(&g, &[1.0, -1.0], 4, 10, 0).unwrap();
        assert_eq!(r.b_raw.mean, 1.0);
        assert_eq!(r.levels[0].1, 2);
        assert!(r.levels[1..].iter().all(|&(_, c)| c == 1));
        assert!((r.sum - 2f64.ln().sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_function() {
        let g = GroupTable::cyclic(4).unwrap();
        assert_eq!(group_check(&g, &[0.0; 4], 3, 10, 0).unwrap().sum, 0.0);
    }
}
