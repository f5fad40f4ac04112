//! Serialized trees, measures and decompositions, and their re-checks.

use chaining::bernoulli::weak_lp_norm;
use chaining::measure::MASS_TOL;
use chaining::partition::{tree_to_measure, verify_tree, CheckKind, LogPower, PartitionTree, TableFunctional};
use chaining::{DistanceSpec, PointSet};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::report::{FailureRecord, Verdict};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "kebab-case")]
pub enum Remainder {
    /// `sup_x ‖v(x)‖₁ ≤ bound`.
    L1 { bound: f64 },
    /// `sup_x ‖v(x)‖_{p,∞} ≤ bound`.
    WeakLp { p: f64, bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bundle {
    /// A tree with the level functional and growth function it was built from.
    Tree {
        points: PointSet,
        distance: DistanceSpec,
        tree: PartitionTree,
        phi: TableFunctional,
        theta: LogPower,
    },
    /// Tree-weight measure with exponents `(alpha, beta)`.
    Measure {
        tree: PartitionTree,
        alpha: f64,
        beta: f64,
        atoms: Vec<(usize, f64)>,
    },
    /// `x = u(x) + v(x)` for every point.
    Decomposition {
        points: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        remainder: Remainder,
    },
}

impl Bundle {
    pub fn kind(&self) -> &'static str {
        match self {
            Bundle::Tree { .. } => "tree",
            Bundle::Measure { .. } => "measure",
            Bundle::Decomposition { .. } => "decomposition",
        }
    }

    pub fn verify(&self) -> Result<(Verdict, serde_json::Value)> {
        let mut v = Verdict::default();
        let results = match self {
            Bundle::Tree {
                points,
                distance,
                tree,
                phi,
                theta,
            } => {
                let rep = verify_tree(tree, points, distance, phi, theta)?;
                v.tree("", &rep.failures);
                serde_json::to_value(&rep)?
            }
            Bundle::Measure {
                tree,
                alpha,
                beta,
                atoms,
            } => verify_measure(&mut v, tree, *alpha, *beta, atoms)?,
            Bundle::Decomposition { points, u, v: rem, remainder } => {
                verify_decomposition(&mut v, points, u, rem, remainder)
            }
        };
        Ok((v, results))
    }
}

fn verify_measure(
    v: &mut Verdict,
    tree: &PartitionTree,
    alpha: f64,
    beta: f64,
    atoms: &[(usize, f64)],
) -> Result<serde_json::Value> {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    v.le("measure normalization", (total - 1.0).abs(), MASS_TOL, format!("total mass {total}"));
    if let Err(e) = tree.validate_shape() {
        v.failures.push(FailureRecord {
            check: CheckKind::Structure.to_string(),
            lhs: None,
            rhs: None,
            detail: e.to_string(),
        });
        return Ok(json!({ "total_mass": total }));
    }
    let card = tree.card();
    v.holds("measure support", atoms.iter().all(|&(i, m)| i < card && m >= 0.0), || {
        format!("atoms must be nonnegative masses on ids below {card}")
    });
    let (mu, rep) = tree_to_measure(tree, alpha, beta)?;
    let mut expected = vec![0.0; card];
    for &(i, m) in mu.atoms() {
        expected[i] = m;
    }
    let mut given = vec![0.0; card];
    for &(i, m) in atoms.iter().filter(|a| a.0 < card) {
        given[i] += m;
    }
    let dev = expected.iter().zip(&given).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    v.le("measure reproduction", dev, 1e-12, "largest atom deviation from the tree weights");
    v.le("measure constant", rep.ratio, rep.constant, "");
    v.holds("level weight bound", rep.level_weights_ok(), || "a level carries more than 2^(k0-k-1)".into());
    Ok(json!({ "total_mass": total, "max_deviation": dev, "measure": rep }))
}

fn verify_decomposition(
    v: &mut Verdict,
    points: &[Vec<f64>],
    u: &[Vec<f64>],
    rem: &[Vec<f64>],
    remainder: &Remainder,
) -> serde_json::Value {
    let shape_ok = u.len() == points.len()
        && rem.len() == points.len()
        && points.iter().zip(u).zip(rem).all(|((x, a), b)| a.len() == x.len() && b.len() == x.len());
    v.holds("decomposition shape", shape_ok, || "u and v must match the points row by row".into());
    if !shape_ok {
        return json!({});
    }
    let mut worst_sum: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for ((x, a), b) in points.iter().zip(u).zip(rem) {
        for ((xi, ai), bi) in x.iter().zip(a).zip(b) {
            // v is computed as x - u, so u + v reproduces x up to one rounding.
            let tol = 1e-12 * (1.0 + xi.abs() + ai.abs());
            worst_sum = worst_sum.max((xi - ai - bi).abs() / tol);
        }
        let norm = match remainder {
            Remainder::L1 { .. } => b.iter().map(|t| t.abs()).sum(),
            Remainder::WeakLp { p, .. } => weak_lp_norm(b, *p),
        };
        worst_norm = worst_norm.max(norm);
    }
    v.le("decomposition sum", worst_sum, 1.0, "largest |x - u - v| in units of the rounding tolerance");
    let bound = match remainder {
        Remainder::L1 { bound } | Remainder::WeakLp { bound, .. } => *bound,
    };
    let name = match remainder {
        Remainder::L1 { .. } => "l1 remainder",
        Remainder::WeakLp { .. } => "weak-lp remainder",
    };
    v.le(name, worst_norm, bound, "");
    json!({ "max_remainder_norm": worst_norm, "bound": bound })
}
