//! From index trees to probability measures.

use serde::{Deserialize, Serialize};

use super::PartitionTree;
use crate::error::{invalid, Result};
use crate::measure::DiscreteMeasure;

/// Summary of [`tree_to_measure`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    /// `sup_x Σ_{k≥k0} r^{-βk} (log 1/μ(C_k(x)))^α`, tail past the last level included.
    pub measure_sum: f64,
    pub witness: usize,
    /// `sup_x Σ_{k≥k0} r^{-βk} (log ℓ_{k+1}(C_{k+1}(x)))^α`.
    pub index_sum: f64,
    /// `measure_sum / (index_sum + r^{-β k0})`.
    pub ratio: f64,
    /// Explicit constant bounding `ratio`, see [`measure_constant`].
    pub constant: f64,
    /// Per level: `(k, Σ_C w_k(C), 2^{k0-k-1})`.
    pub level_weights: Vec<(i32, f64, f64)>,
}

impl MeasureReport {
    pub fn level_weights_ok(&self) -> bool {
        self.level_weights.iter().all(|&(_, s, b)| s <= b)
    }
}

/// Constant `K` with `measure_sum ≤ K (index_sum + r^{-β k0})`.
///
/// With `L_k = log 1/w_k(C_k(x))` one has `L_k = L_{k-1} + log 2(ℓ_k+1)²`, and
/// `log 2(ℓ+1)² ≤ log 8` for `ℓ = 1`, `≤ c log ℓ` for `ℓ ≥ 2` with
/// `c = log 18 / log 2`. For `α ≤ 1` subadditivity of `t ↦ t^α` gives
/// `K = max(r^{-β}(log 2)^α + (log 8)^α/(r^β - 1), c^α r^{-β}) / (1 - r^{-β})`.
/// For `α > 1`, `(x+y)^α ≤ δx^α + K_δ y^α` with `δ = (1+r^β)/2` and
/// `K_δ = (1 - δ^{-1/(α-1)})^{1-α}` gives the same shape with an extra factor.
pub fn measure_constant(alpha: f64, beta: f64, r: f64) -> f64 {
    let q = r.powf(-beta);
    let c = 18f64.ln() / 2f64.ln();
    let l2 = 2f64.ln().powf(alpha);
    let l8 = 8f64.ln().powf(alpha);
    if alpha <= 1.0 {
        (q * l2 + l8 / (r.powf(beta) - 1.0)).max(c.powf(alpha) * q) / (1.0 - q)
    } else {
        let delta = (1.0 + r.powf(beta)) / 2.0;
        let kd = (1.0 - delta.powf(-1.0 / (alpha - 1.0))).powf(1.0 - alpha);
        2.0 * (delta * q * l2 + kd * l8 / (r.powf(beta) - 1.0)).max(kd * c.powf(alpha) * q) / (1.0 - q)
    }
}

/// Weights `w_{k0}(T) = 1/2`, `w_k(C) = w_{k-1}(C') / (2(ℓ_k(C)+1)²)`; the measure
/// charges each centre `z_k(C)` with `w_k(C)` (summed over levels) and puts the
/// leftover mass on the root centre.
pub fn tree_to_measure(tree: &PartitionTree, alpha: f64, beta: f64) -> Result<(DiscreteMeasure, MeasureReport)> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(invalid("measure exponents must be positive"));
    }
    tree.validate_shape()?;
    let r = tree.r;
    let card = tree.card();
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(tree.levels.len());
    let mut level_weights = Vec::with_capacity(tree.levels.len());
    let mut mass = vec![0.0; card];
    for (d, level) in tree.levels.iter().enumerate() {
        let w: Vec<f64> = if d == 0 {
            vec![0.5]
        } else {
            level
                .cells
                .iter()
                .map(|c| {
                    let parent = weights[d - 1][c.parent.expect("validated")];
                    let l = c.ell as f64 + 1.0;
                    parent / (2.0 * l * l)
                })
                .collect()
        };
        let total: f64 = w.iter().sum();
        level_weights.push((level.k, total, 2f64.powi(tree.k0 - level.k - 1)));
        for (c, cell) in level.cells.iter().enumerate() {
            mass[cell.z] += w[c];
        }
        weights.push(w);
    }
    let placed: f64 = mass.iter().sum();
    mass[tree.levels[0].cells[0].z] += (1.0 - placed).max(0.0);
    let mu = DiscreteMeasure::normalized(mass.into_iter().enumerate())?;

    let owners = tree.owners();
    let cell_mass: Vec<Vec<f64>> = tree
        .levels
        .iter()
        .map(|l| l.cells.iter().map(|c| mu.mass(&c.ids)).collect())
        .collect();
    let q = r.powf(-beta);
    let log_term = |m: f64| -> f64 {
        if m >= 1.0 {
            0.0
        } else {
            (-m.ln()).powf(alpha)
        }
    };
    let last = tree.levels.len() - 1;
    let mut measure_sum = f64::NEG_INFINITY;
    let mut witness = 0;
    let mut index_sum: f64 = 0.0;
    for x in 0..card {
        let mut s = 0.0;
        let mut idx = 0.0;
        for (d, level) in tree.levels.iter().enumerate() {
            let wk = r.powf(-beta * f64::from(level.k));
            s += wk * log_term(cell_mass[d][owners[d][x]]);
            if d < last {
                let ell = tree.levels[d + 1].cells[owners[d + 1][x]].ell as f64;
                idx += wk * ell.ln().powf(alpha);
            }
        }
        // The last partition repeats forever.
        let tail_weight = r.powf(-beta * f64::from(tree.kmax() + 1)) / (1.0 - q);
        s += tail_weight * log_term(cell_mass[last][owners[last][x]]);
        if s > measure_sum {
            measure_sum = s;
            witness = x;
        }
        index_sum = index_sum.max(idx);
    }
    let ratio = measure_sum / (index_sum + r.powf(-beta * f64::from(tree.k0)));
    Ok((
        mu,
        MeasureReport {
            measure_sum,
            witness,
            index_sum,
            ratio,
            constant: measure_constant(alpha, beta, r),
            level_weights,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{TreeCell, TreeLevel};

    fn root_two_children() -> PartitionTree {
        PartitionTree {
            r: 4.0,
            beta: 1.0,
            k0: 0,
            levels: vec![
                TreeLevel {
                    k: 0,
                    cells: vec![TreeCell {
                        ids: vec![0, 1],
                        ell: 1,
                        z: 0,
                        parent: None,
                    }],
                },
                TreeLevel {
                    k: 1,
                    cells: vec![
                        TreeCell {
                            ids: vec![0],
                            ell: 1,
                            z: 0,
                            parent: Some(0),
                        },
                        TreeCell {
                            ids: vec![1],
                            ell: 2,
                            z: 1,
                            parent: Some(0),
                        },
                    ],
                },
            ],
        }
    }

    #[test]
    fn child_weights() {
        let (mu, rep) = tree_to_measure(&root_two_children(), 0.5, 1.0).unwrap();
        let (_, s1, b1) = rep.level_weights[1];
        assert!((s1 - (1.0 / 16.0 + 1.0 / 36.0)).abs() < 1e-15);
        assert!(s1 <= b1);
        assert!((mu.mass_of(1) - 1.0 / 36.0).abs() < 1e-15);
        assert!(rep.ratio <= rep.constant);
    }

    #[test]
    fn constant_for_r4_is_below_one() {
        let k = measure_constant(0.5, 1.0, 4.0);
        assert!(k > 0.9 && k < 0.93, "{k}");
        assert!(measure_constant(2.0, 1.0, 4.0).is_finite());
    }
}
