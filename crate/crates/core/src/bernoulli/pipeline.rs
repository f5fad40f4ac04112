//! End-to-end weak-`ℓp` decomposition of a finite `T' ⊂ ℝ^M`: rescale into the
//! unit cube, build decreasing partitions for the interpolated distances and
//! functionals, split along them and map the pieces back.

use serde::{Deserialize, Serialize};

use super::interp::{InterpOracle, MAX_WIDTH};
use super::split::{selection_measure, split_into_weak_lp, weak_lp_norm, ChainMaps, WeakSplitReport};
use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_value, GammaParams};
use crate::mc::{estimate_b_ids, BernoulliMode, Estimate};
use crate::metric::{diameter, DistanceSpec, PointSet};
use crate::partition::{
    build_decreasing, tree_to_measure, DecreasingInstance, DecreasingReport, LevelSetFunctional, PartitionTree,
    TreeCell, TreeLevel,
};
use crate::report::Checks;

/// Cells of level `j` have truncated diameter at most this multiple of `r^{-j}`.
const DIAM_FACTOR: f64 = 4.0;

/// Doublings of `L` tried when `F_0` exceeds `1/H`.
const RETRIES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLpParams {
    pub p: f64,
    /// `r^{2/(2-p)}` must be an integer, the base of the interpolation maps.
    pub r: f64,
    /// Smallest scale factor `L`; `T' ↦ (T' - lo)/(b̂ L)`.
    pub l: f64,
    pub h: f64,
    pub k2: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub max_levels: usize,
}

impl WeakLpParams {
    pub fn new(p: f64, r: f64) -> Self {
        WeakLpParams {
            p,
            r,
            // F_0 is about 1/L, so L = 2H keeps the first probe clear of 1/H.
            l: 8.0,
            h: 4.0,
            k2: 1.0,
            n_samples: 1000,
            seed: 0,
            max_levels: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLpReport {
    pub p: f64,
    pub gamma_exp: f64,
    pub r: f64,
    pub base: u64,
    pub b_hat: Estimate,
    /// Final scale factor after retries.
    pub l: f64,
    pub retries: usize,
    pub f0: f64,
    /// Levels produced by the decreasing builder.
    pub levels: usize,
    /// Level at which the chain was completed by singletons, if needed.
    pub completed_at: Option<i32>,
    pub decreasing: Option<DecreasingReport>,
    pub split: Option<WeakSplitReport>,
    /// `max_x ‖v'(x)‖_p`.
    pub c: f64,
    /// `c / b̂(T')`.
    pub c_ratio: f64,
    /// `max_x ‖v'(x)‖_{p,∞}`.
    pub weak_max: f64,
    /// `γ_{1/2}(U', ‖·‖₂)` for the selection measure.
    pub gamma_half: f64,
    /// `gamma_half / b̂(T')`.
    pub gamma_ratio: f64,
    /// Coordinates where `u' + v'` differs from the input beyond one rounding of each operation.
    pub mismatched: usize,
    pub checks: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLpResult {
    pub u: PointSet,
    pub v: Vec<Vec<f64>>,
    pub report: WeakLpReport,
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `T' = U' + V'` with `max ‖v'‖_{p,∞}` and `γ_{1/2}(U')` reported against `b̂(T')`.
pub fn weak_lp_pipeline(t: &PointSet, params: &WeakLpParams) -> Result<WeakLpResult> {
    let WeakLpParams { p, r, h, k2, n_samples, seed, .. } = *params;
    if !(p > 1.0 && p < 2.0) {
        return Err(invalid(format!("p must lie in (1, 2), got {p}")));
    }
    if !(r >= 4.0) {
        return Err(invalid(format!("r must be at least 4, got {r}")));
    }
    if !(params.l > 0.0 && h > 0.0 && k2 > 0.0) {
        return Err(invalid("L, H and K2 must be positive"));
    }
    let gamma = 1.0 / (2.0 - p);
    let m_f = r.powf(2.0 * gamma);
    let base = m_f.round();
    if (m_f - base).abs() > 1e-9 * m_f || m_f > MAX_WIDTH as f64 {
        return Err(invalid(format!("r^(2/(2-p)) = {m_f} must be an integer")));
    }
    let base = base as u64;
    let (card, dim) = (t.card(), t.dim());
    let ids = t.ids();
    let b_hat = estimate_b_ids(t, &ids, n_samples, seed, BernoulliMode::Auto)?;
    let mut checks = Checks::new();

    if card == 1 {
        return Ok(WeakLpResult {
            u: t.clone(),
            v: vec![vec![0.0; dim]],
            report: WeakLpReport {
                p,
                gamma_exp: gamma,
                r,
                base,
                b_hat,
                l: params.l,
                retries: 0,
                f0: 0.0,
                levels: 0,
                completed_at: None,
                decreasing: None,
                split: None,
                c: 0.0,
                c_ratio: 0.0,
                weak_max: 0.0,
                gamma_half: 0.0,
                gamma_ratio: 0.0,
                mismatched: 0,
                checks,
            },
        });
    }
    let b = b_hat.mean;
    if !(b > 0.0) {
        return Err(Error::Numerical(format!("Rademacher mean estimate {b} is not positive")));
    }

    let lo: Vec<f64> = (0..dim)
        .map(|w| t.points().iter().map(|x| x[w]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..dim)
        .map(|w| t.points().iter().map(|x| x[w]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let range = lo.iter().zip(&hi).map(|(a, c)| c - a).fold(0.0, f64::max);
    let diam2 = diameter(t, &ids, &DistanceSpec::L2)?;
    // The small excess keeps rounding from pushing coordinates past 1/2.
    let mut l = params.l.max(2.0 * range / b).max(diam2 / b) * (1.0 + 1e-9);
    let max_level = {
        let mut k = 0usize;
        while (base as u128).pow(k as u32 + 1) <= MAX_WIDTH as u128 {
            k += 1;
        }
        k
    };
    // The builder reads the functional one level past its deepest partition.
    if max_level < 2 {
        return Err(invalid(format!("base {base} leaves fewer than two exact levels")));
    }
    let max_levels = params.max_levels.min(max_level - 1).max(1);

    let mut retries = 0;
    let (scaled, f0) = loop {
        let scale = 1.0 / (b * l);
        let rows: Vec<Vec<f64>> = t
            .points()
            .iter()
            .map(|x| x.iter().zip(&lo).map(|(v, a)| (v - a) * scale).collect())
            .collect();
        let scaled = PointSet::new(dim, rows)?;
        let probe = InterpOracle::new(&scaled, base, 0, n_samples, seed ^ 0xa5a5)?;
        let f0 = probe.value(0, &ids);
        if f0 <= 1.0 / h {
            break (scaled, f0);
        }
        if retries == RETRIES {
            return Err(Error::Precondition(format!(
                "F_0 = {f0} stays above 1/H = {} after {RETRIES} doublings of L",
                1.0 / h
            )));
        }
        retries += 1;
        l *= 2.0;
    };

    let oracle = InterpOracle::new(&scaled, base, max_levels + 1, n_samples, seed ^ 0xa5a5)?;
    let dec = build_decreasing(&DecreasingInstance {
        card,
        dist: &oracle,
        f: &oracle,
        r,
        gamma_exp: gamma,
        k2,
        h,
        max_levels,
    })?;
    let levels = dec.cells.len();

    // Singletons after the last level satisfy every diameter bound and let
    // the split follow each point to itself.
    let mut tree_levels: Vec<TreeLevel> = dec
        .cells
        .iter()
        .enumerate()
        .map(|(k, level)| TreeLevel {
            k: k as i32,
            cells: level
                .iter()
                .map(|c| TreeCell {
                    ids: c.ids.clone(),
                    ell: c.ell.max(1),
                    z: c.center,
                    parent: c.parent,
                })
                .collect(),
        })
        .collect();
    let last = tree_levels.last().expect("builder returns a level");
    let completed_at = if last.cells.iter().all(|c| c.ids.len() == 1) {
        None
    } else {
        let k = last.k + 1;
        let cells = last
            .cells
            .iter()
            .enumerate()
            .flat_map(|(pi, cell)| {
                cell.ids.iter().enumerate().map(move |(rank, &x)| TreeCell {
                    ids: vec![x],
                    ell: rank + 1,
                    z: x,
                    parent: Some(pi),
                })
            })
            .collect();
        tree_levels.push(TreeLevel { k, cells });
        Some(k)
    };
    let tree = PartitionTree {
        r,
        beta: 1.0,
        k0: 0,
        levels: tree_levels,
    };
    tree.validate_shape()?;
    let (mu, _) = tree_to_measure(&tree, 0.5, 1.0)?;
    let select: Vec<Vec<usize>> = tree
        .levels
        .iter()
        .map(|lv| lv.cells.iter().map(|c| c.z).collect())
        .collect();
    let maps = ChainMaps::new(tree.to_chain()?, select[0][0], select, false)?;

    let half: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(a, c)| (c - a) / (b * l) / 2.0)
        .collect();
    let centred = PointSet::new(
        dim,
        scaled
            .points()
            .iter()
            .map(|x| x.iter().zip(&half).map(|(v, m)| v - m).collect())
            .collect(),
    )?;
    let (split, split_report) = split_into_weak_lp(&centred, &maps, &mu, r, p, DIAM_FACTOR)?;

    // Every coordinate of u(x) is the same coordinate of some input point.
    let mut mismatched = 0;
    let mut u_rows = Vec::with_capacity(card);
    let mut v_rows = Vec::with_capacity(card);
    for x in 0..card {
        let row: Vec<f64> = (0..dim).map(|w| t.point(split.source[x][w])[w]).collect();
        let v: Vec<f64> = (0..dim).map(|w| t.point(x)[w] - row[w]).collect();
        mismatched += (0..dim)
            .filter(|&w| {
                let xv = t.point(x)[w];
                (row[w] + v[w] - xv).abs() > f64::EPSILON * (xv.abs() + row[w].abs())
            })
            .count();
        u_rows.push(row);
        v_rows.push(v);
    }
    let u = PointSet::new(dim, u_rows)?;
    checks.holds("reassembly rounding", mismatched == 0, || format!("{mismatched} coordinates"));
    let scale_back = b * l;
    let weak_max = v_rows.iter().map(|v| weak_lp_norm(v, p)).fold(0.0, f64::max);
    checks.le(
        "rescaled weak remainder",
        weak_max,
        split_report.k_weak * scale_back * (1.0 + 1e-9),
    );
    let c = v_rows.iter().map(|v| lp_norm(v, p)).fold(0.0, f64::max);
    let nu = selection_measure(&maps, &mu)?;
    let gamma_half = gamma_value(&u, &DistanceSpec::L2, &nu, GammaParams::new(0.5, 1.0)?)?;
    checks.extend(dec.report.checks.clone());
    checks.extend(split_report.checks.clone());

    Ok(WeakLpResult {
        u,
        v: v_rows,
        report: WeakLpReport {
            p,
            gamma_exp: gamma,
            r,
            base,
            b_hat,
            l,
            retries,
            f0,
            levels,
            completed_at,
            decreasing: Some(dec.report),
            split: Some(split_report),
            c,
            c_ratio: ratio(c, b),
            weak_max,
            gamma_half,
            gamma_ratio: ratio(gamma_half, b),
            mismatched,
            checks,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_trivial() {
        let t = PointSet::from_rows(vec![vec![0.0, 0.0]]).unwrap();
        let res = weak_lp_pipeline(&t, &WeakLpParams::new(1.5, 4.0)).unwrap();
        assert_eq!(res.v, vec![vec![0.0, 0.0]]);
        assert_eq!(res.report.c, 0.0);
    }

    #[test]
    fn signed_unit_vectors() {
        let t = PointSet::from_rows(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let mut params = WeakLpParams::new(1.5, 4.0);
        params.n_samples = 400;
        let res = weak_lp_pipeline(&t, &params).unwrap();
        let rep = &res.report;
        assert_eq!(rep.base, 256);
        assert_eq!(rep.b_hat.mean, 1.0);
        assert_eq!(rep.mismatched, 0);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks.failures().collect::<Vec<_>>());
        for x in 0..2 {
            for w in 0..2 {
                assert_eq!(res.u.point(x)[w] + res.v[x][w], t.point(x)[w]);
            }
        }
    }

    #[test]
    fn rejects_non_integer_base() {
        let t = PointSet::from_rows(vec![vec![1.0], vec![0.0]]).unwrap();
        assert!(weak_lp_pipeline(&t, &WeakLpParams::new(1.3, 4.0)).is_err());
    }
}
