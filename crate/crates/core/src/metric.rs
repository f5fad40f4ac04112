//! Finite point sets, distances, diameters, packing and covering numbers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauge::GaugeOracle;

/// Absolute tolerance used for closed-ball membership.
pub const BALL_TOL: f64 = 1e-12;

/// A finite list of `dim`-dimensional real vectors, addressed by id `0..card`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPointSet")]
pub struct PointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct RawPointSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    name: String,
}

impl TryFrom<RawPointSet> for PointSet {
    type Error = Error;

    fn try_from(raw: RawPointSet) -> Result<Self> {
        Ok(PointSet::new(raw.dim, raw.points)?.with_name(raw.name))
    }
}

impl PointSet {
    pub fn new(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("point dimension must be positive"));
        }
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(invalid("point coordinates must be finite"));
            }
        }
        Ok(PointSet {
            dim,
            points,
            name: String::new(),
        })
    }

    /// Builds a set from rows, taking the dimension from the first row.
    pub fn from_rows(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).ok_or(Error::EmptySet)?;
        PointSet::new(dim, points)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn card(&self) -> usize {
        self.points.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.points[id]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn ids(&self) -> Vec<usize> {
        (0..self.card()).collect()
    }

    pub fn subset(&self, ids: &[usize]) -> Result<PointSet> {
        PointSet::new(self.dim, ids.iter().map(|&i| self.points[i].clone()).collect())
    }

    pub fn scaled(&self, c: f64) -> PointSet {
        PointSet {
            dim: self.dim,
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|v| v * c).collect())
                .collect(),
            name: self.name.clone(),
        }
    }

    pub fn translated(&self, shift: &[f64]) -> PointSet {
        PointSet {
            dim: self.dim,
            points: self
                .points
                .iter()
                .map(|p| p.iter().zip(shift).map(|(v, s)| v + s).collect())
                .collect(),
            name: self.name.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One point per row, comma separated, `.` as decimal mark.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("line {}: {:?}: {e}", lineno + 1, f.trim()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        PointSet::from_rows(rows)
    }

    /// Loads `.csv` files as CSV and anything else as the JSON envelope.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            PointSet::from_csv(&text)
        } else {
            PointSet::from_json(&text)
        }
    }
}

/// How two points are compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceSpec {
    L1,
    L2,
    Linf,
    Lp { p: f64 },
    Gauge { gauge: GaugeOracle },
    /// Squared-distance-like `Σ min(1, r^{2j}(f-g)²)`.
    TruncPhi { j: i32, r: f64 },
    /// `(Σ min((f-g)², r^{-4·gamma_exp·i}))^{1/2}`.
    TruncD { i: i32, r: f64, gamma_exp: f64 },
}

impl DistanceSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistanceSpec::Lp { p } if !(*p >= 1.0) => {
                Err(invalid(format!("Lp distance needs p >= 1, got {p}")))
            }
            DistanceSpec::Gauge { gauge } => gauge.validate(),
            DistanceSpec::TruncPhi { r, .. } | DistanceSpec::TruncD { r, .. } if !(*r > 1.0) => {
                Err(invalid(format!("truncated functionals need r > 1, got {r}")))
            }
            DistanceSpec::TruncD { gamma_exp, .. } if !(*gamma_exp > 0.0) => {
                Err(invalid("truncated distance needs a positive exponent"))
            }
            _ => Ok(()),
        }
    }

    /// Evaluates without dimension checks.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let diffs = x.iter().zip(y).map(|(a, b)| a - b);
        match self {
            DistanceSpec::L1 => diffs.map(f64::abs).sum(),
            DistanceSpec::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            DistanceSpec::Linf => diffs.fold(0.0, |m, d| m.max(d.abs())),
            DistanceSpec::Lp { p } => {
                if p.is_infinite() {
                    diffs.fold(0.0, |m, d| m.max(d.abs()))
                } else {
                    diffs.map(|d| d.abs().powf(*p)).sum::<f64>().powf(1.0 / p)
                }
            }
            DistanceSpec::Gauge { gauge } => gauge.dist(x, y),
            DistanceSpec::TruncPhi { j, r } => {
                let s = r.powi(2 * j);
                diffs.map(|d| (s * d * d).min(1.0)).sum()
            }
            DistanceSpec::TruncD { i, r, gamma_exp } => {
                let cap = r.powf(-4.0 * gamma_exp * f64::from(*i));
                diffs.map(|d| (d * d).min(cap)).sum::<f64>().sqrt()
            }
        }
    }

    /// Evaluates between two ids of a point set.
    pub fn between(&self, set: &PointSet, a: usize, b: usize) -> f64 {
        self.eval(set.point(a), set.point(b))
    }
}

/// Distance between two points with a dimension check.
pub fn distance(spec: &DistanceSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let DistanceSpec::Gauge { gauge } = spec {
        if gauge.dim() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: gauge.dim(),
                found: x.len(),
            });
        }
    }
    Ok(spec.eval(x, y))
}

/// Largest pairwise value over the subset `ids`.
pub fn diameter(set: &PointSet, ids: &[usize], spec: &DistanceSpec) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(diameter_unchecked(set, ids, spec))
}

pub(crate) fn diameter_unchecked(set: &PointSet, ids: &[usize], spec: &DistanceSpec) -> f64 {
    if ids.len() < 64 {
        let mut best: f64 = 0.0;
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                best = best.max(spec.between(set, i, j));
            }
        }
        return best;
    }
    ids.par_iter()
        .enumerate()
        .map(|(a, &i)| {
            ids[a + 1..]
                .iter()
                .fold(0.0f64, |m, &j| m.max(spec.between(set, i, j)))
        })
        .reduce(|| 0.0, f64::max)
}

/// Closed ball `B(center, radius)` for a distance spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallQuery {
    pub center: usize,
    pub radius: f64,
    pub spec: DistanceSpec,
}

impl BallQuery {
    pub fn contains(&self, set: &PointSet, id: usize) -> bool {
        self.spec.between(set, self.center, id) <= self.radius + BALL_TOL
    }

    /// Members of the ball among `ids`, in the order given.
    pub fn members(&self, set: &PointSet, ids: &[usize]) -> Vec<usize> {
        ids.iter()
            .copied()
            .filter(|&i| self.contains(set, i))
            .collect()
    }
}

/// Separations of a farthest-point ordering: entry `n - 2` is the smallest
/// pairwise distance among the first `n` points picked (`n ≥ 2`).
pub fn farthest_point_separations(
    set: &PointSet,
    ids: &[usize],
    spec: &DistanceSpec,
    n_max: usize,
) -> Vec<f64> {
    let mut out = Vec::new();
    if ids.len() < 2 || n_max < 2 {
        return out;
    }
    let first = ids[0];
    let mut nearest: Vec<f64> = ids.iter().map(|&i| spec.between(set, first, i)).collect();
    let mut chosen = vec![false; ids.len()];
    chosen[0] = true;
    let mut current_sep = f64::INFINITY;
    for _ in 1..n_max.min(ids.len()) {
        let (pos, d) = nearest
            .iter()
            .enumerate()
            .filter(|(p, _)| !chosen[*p])
            .fold((usize::MAX, -1.0), |acc, (p, &d)| if d > acc.1 { (p, d) } else { acc });
        if pos == usize::MAX {
            break;
        }
        chosen[pos] = true;
        current_sep = current_sep.min(d);
        out.push(current_sep);
        let new = ids[pos];
        let update: Vec<f64> = if ids.len() > 2048 {
            ids.par_iter().map(|&i| spec.between(set, new, i)).collect()
        } else {
            ids.iter().map(|&i| spec.between(set, new, i)).collect()
        };
        for (slot, d) in nearest.iter_mut().zip(update) {
            *slot = slot.min(d);
        }
    }
    out
}

/// Certified lower bound on `sup{ε : n points of S pairwise more than ε apart}`.
///
/// Binary search (40 steps over `[0, diameter]`) against a greedy
/// farthest-point packing; returns 0 when `n > card(S)` and `+∞` for a
/// single point, which is separated at every scale.
pub fn packing_eps(set: &PointSet, ids: &[usize], spec: &DistanceSpec, n: usize) -> f64 {
    if n > ids.len() {
        return 0.0;
    }
    if n < 2 {
        return f64::INFINITY;
    }
    let seps = farthest_point_separations(set, ids, spec, n);
    packing_from_separations(&seps, n, diameter_unchecked(set, ids, spec))
}

/// The binary search of [`packing_eps`] on precomputed farthest-point separations.
pub fn packing_from_separations(seps: &[f64], n: usize, diam: f64) -> f64 {
    if n < 2 || n - 2 >= seps.len() {
        return 0.0;
    }
    let sep = seps[n - 2];
    let (mut lo, mut hi) = (0.0, diam);
    if sep <= 0.0 {
        return 0.0;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        // Feasible when the greedy packing keeps separation strictly above mid.
        if sep > mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Two-sided bounds on the covering number `N(S, εU)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverBounds {
    pub lower: usize,
    pub upper: usize,
}

/// Greedy `2ε`-separated subset: no translate of `εU` holds two of its points.
pub fn greedy_packing(set: &PointSet, ids: &[usize], spec: &DistanceSpec, sep: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for &i in ids {
        if chosen
            .iter()
            .all(|&c| spec.between(set, c, i) > sep + BALL_TOL)
        {
            chosen.push(i);
        }
    }
    chosen
}

#[derive(PartialEq, Eq)]
struct Cand {
    count: usize,
    id_pos: usize,
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.id_pos.cmp(&self.id_pos))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy set cover by balls of radius `eps` centred at points of the set;
/// picks the centre covering the most uncovered points, lowest id on ties.
pub fn greedy_net(set: &PointSet, ids: &[usize], spec: &DistanceSpec, eps: f64) -> Vec<usize> {
    let n = ids.len();
    let covers = |a: usize, b: usize| spec.between(set, ids[a], ids[b]) <= eps + BALL_TOL;
    let mut covered = vec![false; n];
    let counts: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|a| (0..n).filter(|&b| covers(a, b)).count())
        .collect();
    let mut heap: BinaryHeap<Cand> = counts
        .iter()
        .enumerate()
        .map(|(p, &c)| Cand { count: c, id_pos: p })
        .collect();
    let mut remaining = n;
    let mut centres = Vec::new();
    while remaining > 0 {
        let Some(top) = heap.pop() else { break };
        let fresh = (0..n).filter(|&b| !covered[b] && covers(top.id_pos, b)).count();
        if fresh == 0 {
            continue;
        }
        let beats_next = heap.peek().is_none_or(|next| {
            Cand {
                count: fresh,
                id_pos: top.id_pos,
            } >= *next
        });
        if fresh == top.count || beats_next {
            centres.push(ids[top.id_pos]);
            for b in 0..n {
                if !covered[b] && covers(top.id_pos, b) {
                    covered[b] = true;
                    remaining -= 1;
                }
            }
        } else {
            heap.push(Cand {
                count: fresh,
                id_pos: top.id_pos,
            });
        }
    }
    centres
}

/// `lower ≤ N(S, εU) ≤ upper`: the lower bound is a greedy `2ε`-separated set,
/// the upper bound a greedy net of radius `ε`.
pub fn covering_number(set: &PointSet, ids: &[usize], spec: &DistanceSpec, eps: f64) -> CoverBounds {
    if ids.is_empty() {
        return CoverBounds { lower: 0, upper: 0 };
    }
    let upper = greedy_net(set, ids, spec, eps).len();
    let lower = greedy_packing(set, ids, spec, 2.0 * eps).len().min(upper);
    CoverBounds { lower, upper }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> PointSet {
        PointSet::new(1, points.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn l2_three_four_five() {
        assert_eq!(distance(&DistanceSpec::L2, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn trunc_phi_hand_value() {
        let spec = DistanceSpec::TruncPhi { j: 1, r: 2.0 };
        let v = distance(&spec, &[0.1, 2.0], &[0.0, 0.0]).unwrap();
        assert!((v - 1.04).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            distance(&DistanceSpec::L1, &[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn diameters() {
        let s = PointSet::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(diameter(&s, &[0], &DistanceSpec::L2).unwrap(), 0.0);
        assert_eq!(diameter(&s, &[0, 1], &DistanceSpec::L2).unwrap(), 1.0);
        let phi0 = DistanceSpec::TruncPhi { j: 0, r: 1.5 };
        assert_eq!(diameter(&s, &[0, 1, 2], &phi0).unwrap(), 1.0);
        assert!(matches!(diameter(&s, &[], &DistanceSpec::L2), Err(Error::EmptySet)));
    }

    #[test]
    fn packing_pins() {
        let s = line(&[-1.0, 1.0]);
        let eps = packing_eps(&s, &s.ids(), &DistanceSpec::Linf, 2);
        assert!((eps - 2.0).abs() < 1e-9);
        let single = line(&[0.3]);
        assert_eq!(packing_eps(&single, &single.ids(), &DistanceSpec::L2, 2), 0.0);
        let corners = PointSet::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let eps = packing_eps(&corners, &corners.ids(), &DistanceSpec::Linf, 4);
        assert!((eps - 2.0).abs() < 1e-9);
        assert_eq!(packing_eps(&corners, &corners.ids(), &DistanceSpec::Linf, 5), 0.0);
    }

    #[test]
    fn covering_pins() {
        let grid: Vec<f64> = (0..=200).map(|k| -1.0 + k as f64 / 100.0).collect();
        let s = line(&grid);
        let cb = covering_number(&s, &s.ids(), &DistanceSpec::Linf, 0.5);
        assert_eq!(cb.upper, 2);
        let corners = PointSet::from_rows(vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let cb = covering_number(&corners, &corners.ids(), &DistanceSpec::Linf, 0.5);
        assert_eq!(cb.lower, 4);
        let inside = line(&[-0.4, 0.1, 0.9]);
        let cb = covering_number(&inside, &inside.ids(), &DistanceSpec::Linf, 1.0);
        assert_eq!((cb.lower, cb.upper), (1, 1));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let s = PointSet::from_rows(vec![vec![0.5, -1.25], vec![1e-3, 7.0]])
            .unwrap()
            .with_name("pair");
        assert_eq!(PointSet::from_csv(&s.to_csv()).unwrap().points(), s.points());
        let back = PointSet::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(PointSet::from_json(r#"{"dim":2,"points":[[1.0]]}"#).is_err());
    }
}
