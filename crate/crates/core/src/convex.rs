//! Convex bodies with a power-type modulus of convexity: the translate
//! functional `φ_k`, partition trees in the `‖·‖_U` metric, and the comparison
//! between `γ_{α,β}(B, ‖·‖_U)` and `sup_ε ε (log N(B, εU))^α`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_value, sup_entropy, EntropyProfile, GammaParams};
use crate::gauge::GaugeOracle;
use crate::measure::DiscreteMeasure;
use crate::metric::{greedy_net, packing_eps, CoverBounds, DistanceSpec, PointSet};
use crate::partition::{
    build_tree, tree_to_measure, verify_tree, Growth, LevelFunctional, MeasureReport, PartitionTree,
    TreeOptions, TreeReport,
};
use crate::report::Checks;

/// `1 - ‖x+y‖/2 ≥ γ ‖x-y‖^p` for `‖x‖, ‖y‖ ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct ConvexityCert {
    p: f64,
    gamma: f64,
}

impl TryFrom<(f64, f64)> for ConvexityCert {
    type Error = Error;

    fn try_from((p, gamma): (f64, f64)) -> Result<Self> {
        Self::new(p, gamma)
    }
}

impl From<ConvexityCert> for (f64, f64) {
    fn from(c: ConvexityCert) -> Self {
        (c.p, c.gamma)
    }
}

impl ConvexityCert {
    pub fn new(p: f64, gamma: f64) -> Result<Self> {
        if !(p >= 2.0 && p.is_finite()) {
            return Err(invalid(format!("convexity exponent must be at least 2, got {p}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("convexity constant must be positive, got {gamma}")));
        }
        Ok(ConvexityCert { p, gamma })
    }

    /// `p = 2`, `γ = (min a / max a)² / 8`.
    pub fn for_ellipsoid(semiaxes: &[f64]) -> Result<Self> {
        let lo = semiaxes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = semiaxes.iter().copied().fold(0.0, f64::max);
        if semiaxes.is_empty() || !(lo > 0.0) {
            return Err(invalid("ellipsoid needs positive semiaxes"));
        }
        Self::new(2.0, (lo / hi).powi(2) / 8.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// `0` when `‖x‖_U ≤ 2r^{-k}`, else `inf{‖y‖_B : y ∈ x + 2r^{-k}U}`.
pub fn phi_gauge(x: &[f64], k: i32, r: f64, b: &GaugeOracle, u: &GaugeOracle) -> Result<f64> {
    b.min_over_translate(x, 2.0 * r.powi(-k), u)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pairs: usize,
    /// Largest `γ‖x-y‖^p - t^{p-1}(t-u)` seen.
    pub max_excess: f64,
    /// `(x, y, t)` attaining `max_excess` when it is a violation.
    pub witness: Option<(Vec<f64>, Vec<f64>, f64)>,
    pub passed: bool,
}

/// Rounding allowance for `t - u`, which cancels when `x ≈ y`.
fn cancel_tol(t: f64) -> f64 {
    1e-13 * t.max(f64::MIN_POSITIVE)
}

fn lemma_excess(b: &GaugeOracle, cert: &ConvexityCert, x: &[f64], y: &[f64], t: f64) -> f64 {
    let sum: Vec<f64> = x.iter().zip(y).map(|(a, c)| a + c).collect();
    let u = b.norm(&sum) / 2.0;
    let lhs = cert.gamma * b.dist(x, y).powf(cert.p);
    lhs - t.powf(cert.p - 1.0) * (t - u) - cancel_tol(t)
}

fn tally(items: impl Iterator<Item = (f64, Vec<f64>, Vec<f64>, f64)>) -> ConvexityReport {
    let mut pairs = 0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst = None;
    for (e, x, y, t) in items {
        pairs += 1;
        if e > max_excess {
            max_excess = e;
            worst = Some((x, y, t));
        }
    }
    let passed = !(max_excess > 0.0);
    ConvexityReport {
        pairs,
        max_excess,
        witness: if passed { None } else { worst },
        passed,
    }
}

/// Samples pairs with `‖x‖, ‖y‖ ≤ t` and tests `γ‖x-y‖^p ≤ t^{p-1}(t - ‖x+y‖/2)`.
/// Half the pairs sit on the sphere of radius `t`, a quarter are near-equal.
pub fn convexity_check(b: &GaugeOracle, cert: &ConvexityCert, n_pairs: usize, seed: u64) -> Result<ConvexityReport> {
    b.validate()?;
    let dim = b.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_sphere = |rng: &mut ChaCha8Rng, radius: f64| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = b.norm(&v);
            if n > 0.0 && n.is_finite() {
                return v.iter().map(|c| c * radius / n).collect();
            }
        }
    };
    let mut samples = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let t: f64 = 1.0 - rng.random::<f64>();
        let (x, y) = match i % 4 {
            0 | 1 => (on_sphere(&mut rng, t), on_sphere(&mut rng, t)),
            2 => {
                let x = on_sphere(&mut rng, t);
                let h = 10f64.powf(-6.0 * rng.random::<f64>());
                let d = on_sphere(&mut rng, h * t);
                let y: Vec<f64> = x.iter().zip(&d).map(|(a, c)| a + c).collect();
                let ny = b.norm(&y);
                let y = if ny > t { y.iter().map(|c| c * t / ny).collect() } else { y };
                (x, y)
            }
            _ => {
                let (sx, sy) = (rng.random::<f64>() * t, rng.random::<f64>() * t);
                (on_sphere(&mut rng, sx), on_sphere(&mut rng, sy))
            }
        };
        samples.push((x, y, t));
    }
    Ok(tally(samples.into_iter().map(|(x, y, t)| {
        (lemma_excess(b, cert, &x, &y, t), x, y, t)
    })))
}

/// The same inequality on given points of `B`, with `t = max(‖x‖, ‖y‖)`.
pub fn convexity_on_points(
    b: &GaugeOracle,
    cert: &ConvexityCert,
    points: &PointSet,
    pairs: &[(usize, usize)],
) -> ConvexityReport {
    tally(pairs.iter().map(|&(i, j)| {
        let (x, y) = (points.point(i), points.point(j));
        let t = b.norm(x).max(b.norm(y));
        (lemma_excess(b, cert, x, y, t), x.to_vec(), y.to_vec(), t)
    }))
}

/// Points `h·z`, `z ∈ ℤ^d`, inside the ellipsoid, lexicographic order.
/// Returns `None` once more than `cap` points are found.
fn lattice_points(a: &[f64], h: f64, cap: usize) -> Option<Vec<Vec<f64>>> {
    fn rec(a: &[f64], h: f64, room: f64, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>, cap: usize) -> bool {
        let i = prefix.len();
        if i == a.len() {
            out.push(prefix.clone());
            return out.len() <= cap;
        }
        let m = (a[i] * room.max(0.0).sqrt() / h + 1e-12).floor() as i64;
        for z in -m..=m {
            let v = z as f64 * h;
            let left = room - (v / a[i]).powi(2);
            if left < -1e-12 {
                continue;
            }
            prefix.push(v);
            let ok = rec(a, h, left, prefix, out, cap);
            prefix.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    let mut out = Vec::new();
    rec(a, h, 1.0, &mut Vec::with_capacity(a.len()), &mut out, cap).then_some(out)
}

/// Lattice discretization of an ellipsoid with at most `budget` points: the
/// finest mesh found by bisection whose lattice count stays within budget.
/// Points come in increasing gauge order, the origin first, so lowest-id tie
/// breaks favour the centre of the body.
pub fn ellipsoid_lattice(semiaxes: &[f64], budget: usize) -> Result<(PointSet, f64)> {
    if semiaxes.is_empty() || semiaxes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(invalid("ellipsoid needs positive finite semiaxes"));
    }
    if budget == 0 {
        return Err(invalid("lattice budget must be positive"));
    }
    let top = semiaxes.iter().copied().fold(0.0, f64::max);
    // Mesh above the largest semiaxis: only the origin.
    let mut coarse = 2.0 * top;
    let mut fine = coarse;
    let mut best = lattice_points(semiaxes, coarse, budget).expect("origin only");
    loop {
        fine /= 2.0;
        match lattice_points(semiaxes, fine, budget) {
            Some(pts) => {
                coarse = fine;
                best = pts;
            }
            None => break,
        }
        if fine < 1e-9 * top {
            break;
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (coarse + fine);
        match lattice_points(semiaxes, mid, budget) {
            Some(pts) => {
                coarse = mid;
                best = pts;
            }
            None => fine = mid,
        }
    }
    let gauge = |x: &[f64]| -> f64 { x.iter().zip(semiaxes).map(|(v, a)| (v / a).powi(2)).sum() };
    best.sort_by(|x, y| gauge(x).total_cmp(&gauge(y)));
    Ok((PointSet::new(semiaxes.len(), best)?, coarse))
}

/// Bounds on `N(E, εB_2)` for the ellipsoid `E` with the given semiaxes.
///
/// Lower: projection onto the axes with `a_i ≥ ε` and volume ratio,
/// `Π_{a_i ≥ ε} a_i/ε`. Upper: the smaller of the volume bound
/// `Π (1 + 2a_i/ε)` and a greedy net of radius `3ε/4` over a lattice of mesh
/// `ε/(4√d)` covering the ellipsoid (used while that lattice is small).
pub fn ellipsoid_covering(semiaxes: &[f64], eps: f64) -> Result<CoverBounds> {
    if semiaxes.is_empty() || semiaxes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(invalid("ellipsoid needs positive finite semiaxes"));
    }
    if !(eps > 0.0) {
        return Err(invalid("covering radius must be positive"));
    }
    if semiaxes.iter().all(|&a| a <= eps) {
        return Ok(CoverBounds { lower: 1, upper: 1 });
    }
    let log_lower: f64 = semiaxes.iter().filter(|&&a| a >= eps).map(|a| (a / eps).ln()).sum();
    let lower = (log_lower.exp() * (1.0 - 1e-12)).ceil().max(1.0);
    let log_vol: f64 = semiaxes.iter().map(|a| (1.0 + 2.0 * a / eps).ln()).sum();
    let mut upper = log_vol.exp().floor();
    let d = semiaxes.len() as f64;
    let h = eps / (4.0 * d.sqrt());
    // Every point of E is within h√d/2 = ε/8 of a lattice point of the
    // dilated ellipsoid, and the net covers those within 3ε/4.
    let reach = h * d.sqrt() / 2.0;
    let grown: Vec<f64> = semiaxes.iter().map(|a| a + reach).collect();
    if let Some(pts) = lattice_points(&grown, h, 60_000) {
        let set = PointSet::new(semiaxes.len(), pts)?;
        let net = greedy_net(&set, &set.ids(), &DistanceSpec::L2, 0.75 * eps);
        upper = upper.min(net.len() as f64);
    }
    Ok(CoverBounds {
        lower: (lower.min(upper)) as usize,
        upper: upper as usize,
    })
}

/// Upper bound on the packing function `ε(n)` of an ellipsoid `B` in the
/// metric of an axis-aligned ellipsoid `U`: with `c_i = a_i/b_i`, disjoint
/// balls of radius `ε/2` give `n ≤ Π (1 + 2c_i/ε)`; also `ε ≤ 2 max c_i`.
/// Works with `log n` so that `n = 2^{2^m}` never overflows.
pub fn ellipsoid_packing_upper(ratios: &[f64], log_n: f64) -> f64 {
    let cap = 2.0 * ratios.iter().copied().fold(0.0, f64::max);
    if log_n <= 0.0 {
        return cap;
    }
    let f = |e: f64| ratios.iter().map(|c| (1.0 + 2.0 * c / e).ln()).sum::<f64>() - log_n;
    if f(cap) >= 0.0 {
        return cap;
    }
    let (mut lo, mut hi) = (0.0f64, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // f decreases in ε; keep hi on the side where f ≤ 0.
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Where the packing function comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsSource {
    /// Volume upper bound for ellipsoid pairs: the growth condition is certified.
    Volume,
    /// Greedy packing of the discretization, a lower bound: not certified.
    Packing,
}

/// `θ(1) = 0`, `θ(n) = γ/(2r ε(n))^p`.
struct PackingGrowth {
    coef: f64,
    p: f64,
    eps: Vec<f64>,
}

impl Growth for PackingGrowth {
    fn theta(&self, n: usize) -> f64 {
        if n <= 1 {
            return 0.0;
        }
        let e = self.eps[n.min(self.eps.len() - 1)];
        if e > 0.0 {
            self.coef / e.powf(self.p)
        } else {
            f64::INFINITY
        }
    }
}

/// `φ_k` on the points, one lazily filled row per level, forced monotone.
struct GaugeLevels<'a> {
    points: &'a PointSet,
    b: &'a GaugeOracle,
    u: &'a GaugeOracle,
    r: f64,
    rows: Vec<OnceLock<std::result::Result<(Vec<f64>, f64), String>>>,
}

impl GaugeLevels<'_> {
    /// Row `k` and the largest upward correction it needed.
    fn row(&self, k: i32) -> std::result::Result<&(Vec<f64>, f64), String> {
        let d = k.clamp(0, self.rows.len() as i32 - 1) as usize;
        self.rows[d]
            .get_or_init(|| {
                let raw: std::result::Result<Vec<f64>, String> = (0..self.points.card())
                    .into_par_iter()
                    .map(|x| {
                        phi_gauge(self.points.point(x), d as i32, self.r, self.b, self.u)
                            .map(|v| v.min(1.0))
                            .map_err(|e| e.to_string())
                    })
                    .collect();
                let mut raw = raw?;
                let mut fix: f64 = 0.0;
                if d > 0 {
                    let (prev, _) = self.row(d as i32 - 1)?;
                    for (v, &p) in raw.iter_mut().zip(prev) {
                        if *v < p {
                            fix = fix.max(p - *v);
                            *v = p;
                        }
                    }
                }
                Ok((raw, fix))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    fn max_fix(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.get().and_then(|r| r.as_ref().ok()).map(|r| r.1))
            .fold(0.0, f64::max)
    }
}

impl LevelFunctional for GaugeLevels<'_> {
    fn eval(&self, k: i32, x: usize) -> f64 {
        if k < 0 {
            return 0.0;
        }
        // An evaluation failure poisons the value; the pipeline reports it.
        self.row(k).map(|r| r.0[x]).unwrap_or(f64::NAN)
    }

    fn bound(&self) -> f64 {
        1.0
    }
}

/// Inputs of [`convex_pipeline`]: points of `B` (the discretized body), the
/// two gauges, the convexity certificate of `B` and the exponents of
/// `γ_{α,β}`; `β ≤ p` is required and `β = 2` is the usual choice.
#[derive(Clone, Debug)]
pub struct ConvexInstance<'a> {
    pub points: &'a PointSet,
    pub b: &'a GaugeOracle,
    pub u: &'a GaugeOracle,
    pub cert: ConvexityCert,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

/// One row of the packing table at `n = 2^{2^m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub m: u32,
    /// Greedy packing of the points (zero when `n` exceeds the card).
    pub packing: f64,
    /// Volume upper bound, ellipsoid pairs only.
    pub volume: Option<f64>,
    /// The value used, `ε_m`.
    pub used: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexReport {
    pub card: usize,
    pub eps_source: EpsSource,
    pub eps_table: Vec<EpsRow>,
    pub tree: TreeReport,
    pub depth: usize,
    /// Largest upward correction applied to make `φ_k` monotone in `k`.
    pub monotone_fix: f64,
    /// `2^{p+2} r^p / γ`.
    pub packing_bound: f64,
    /// `max_x Σ_k r^{-kp} ε(ℓ_{k+1})^{-p}` (terms with `ℓ = 1` omitted).
    pub packing_sum: f64,
    /// `None` stands for `β' = ∞`.
    pub beta_prime: Option<f64>,
    /// Worst cases over points of the three regrouped sums and of
    /// `S / (S₁^u S₂^v)`.
    pub s_max: f64,
    pub s1_max: f64,
    pub s2_max: f64,
    pub holder_ratio: f64,
    /// Entropy size `M` of `B` at scales `r^{-k}`, `k ≥ 0`.
    pub m_entropy: f64,
    /// `max_x Σ_k r^{-kβ} (log ℓ_{k+1})^{αβ}`.
    pub index_sum: f64,
    /// `index_sum · γ^{β/p} / M^β`.
    pub index_constant: Option<f64>,
    pub measure: MeasureReport,
    pub gamma: f64,
    pub entropy: EntropyProfile,
    /// `gamma / entropy.value`.
    pub ratio: Option<f64>,
    pub convexity: ConvexityReport,
    pub checks: Checks,
}

pub struct ConvexResult {
    pub tree: PartitionTree,
    pub measure: DiscreteMeasure,
    pub report: ConvexReport,
}

fn u_spec(u: &GaugeOracle) -> DistanceSpec {
    match u.as_ellipsoid() {
        Some(axes) if axes.iter().all(|&a| a == 1.0) => DistanceSpec::L2,
        _ => DistanceSpec::Gauge { gauge: u.clone() },
    }
}

/// Builds the partition tree of the points in the `‖·‖_U` metric with the
/// translate functional and the packing growth function (`k0 = 0`), checks
/// the packing-sum bound and its regrouping by doubly exponential blocks,
/// builds the tree measure and compares `γ_{α,β}` with the entropy supremum.
pub fn convex_pipeline(inst: &ConvexInstance) -> Result<ConvexResult> {
    let ConvexInstance {
        points,
        b,
        u,
        cert,
        alpha,
        beta,
        r,
    } = *inst;
    b.validate()?;
    u.validate()?;
    if b.dim() != points.dim() || u.dim() != points.dim() {
        return Err(Error::DimensionMismatch {
            expected: points.dim(),
            found: b.dim().max(u.dim()),
        });
    }
    if !(r >= 8.0) {
        return Err(invalid(format!("convex pipeline needs r >= 8, got {r}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let p = cert.p;
    if !(beta > 0.0 && beta <= p) {
        return Err(invalid(format!("beta must lie in (0, {p}]")));
    }
    if let Some(x) = (0..points.card()).find(|&x| b.norm(points.point(x)) > 1.0 + 1e-12) {
        return Err(Error::Precondition(format!("point {x} lies outside the body")));
    }
    let card = points.card();
    let spec = u_spec(u);
    let ids = points.ids();

    // The certificate on pairs of the discretization.
    let mut rng = ChaCha8Rng::seed_from_u64(card as u64);
    let pairs: Vec<(usize, usize)> = (0..card.min(4096))
        .map(|_| (rng.random_range(0..card), rng.random_range(0..card)))
        .collect();
    let convexity = convexity_on_points(b, &cert, points, &pairs);
    if !convexity.passed {
        let (x, y, t) = convexity.witness.clone().unwrap_or_default();
        return Err(Error::Precondition(format!(
            "convexity certificate fails at x = {x:?}, y = {y:?}, t = {t} (excess {})",
            convexity.max_excess
        )));
    }

    // Packing function.
    let ratios: Option<Vec<f64>> = match (b.as_ellipsoid(), u.as_ellipsoid()) {
        (Some(a), Some(bu)) => Some(a.iter().zip(&bu).map(|(x, y)| x / y).collect()),
        _ => None,
    };
    let eps_source = if ratios.is_some() { EpsSource::Volume } else { EpsSource::Packing };
    let eps: Vec<f64> = match &ratios {
        Some(c) => (0..=card)
            .into_par_iter()
            .map(|n| if n < 2 { 0.0 } else { ellipsoid_packing_upper(c, (n as f64).ln()) })
            .collect(),
        None => {
            let seps = crate::metric::farthest_point_separations(points, &ids, &spec, card);
            let diam = crate::metric::diameter(points, &ids, &spec)?;
            (0..=card)
                .map(|n| crate::metric::packing_from_separations(&seps, n, diam))
                .collect()
        }
    };
    let coef = cert.gamma / (2.0 * r).powf(p);
    let theta = PackingGrowth { coef, p, eps: eps.clone() };
    let levels = GaugeLevels {
        points,
        b,
        u,
        r,
        rows: (0..64).map(|_| OnceLock::new()).collect(),
    };
    let tree = build_tree(points, &spec, &levels, &theta, r, p, TreeOptions::with_k0(0))?;
    if let Some(Err(e)) = levels.rows.iter().find_map(|r| r.get().filter(|v| v.is_err())) {
        return Err(Error::Numerical(format!("translate functional: {e}")));
    }
    let tree_report = verify_tree(&tree, points, &spec, &levels, &theta)?;
    let monotone_fix = levels.max_fix();

    // Doubly exponential blocks: m with 2^m ≤ log2 ℓ < 2^{m+1}.
    let max_ell = tree
        .levels
        .iter()
        .flat_map(|l| l.cells.iter().map(|c| c.ell))
        .max()
        .unwrap_or(1);
    let m_of = |ell: usize| -> Option<u32> {
        (ell >= 2).then(|| (ell as f64).log2().log2().floor().max(0.0) as u32)
    };
    let m_top = m_of(max_ell).unwrap_or(0);
    let eps_table: Vec<EpsRow> = (0..=m_top)
        .into_par_iter()
        .map(|m| {
            let log2_n = 2f64.powi(m as i32);
            let packing = if log2_n <= (card as f64).log2() {
                packing_eps(points, &ids, &spec, 2f64.powf(log2_n) as usize)
            } else {
                0.0
            };
            let volume = ratios.as_ref().map(|c| ellipsoid_packing_upper(c, log2_n * 2f64.ln()));
            EpsRow {
                m,
                packing,
                volume,
                used: volume.unwrap_or(packing),
            }
        })
        .collect();

    let packing_bound = 2f64.powf(p + 2.0) * r.powf(p) / cert.gamma;
    let beta_prime = {
        let inv = 1.0 / beta - 1.0 / p;
        (inv > 1e-15).then(|| 1.0 / inv)
    };
    let (uexp, vexp) = (beta_prime.map_or(0.0, |bp| beta / bp), beta / p);
    let owners = tree.owners();
    let mut checks = Checks::new();
    let mut packing_sum: f64 = 0.0;
    let (mut s_max, mut s1_max, mut s2_max, mut holder_ratio): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let mut index_sum: f64 = 0.0;
    for x in 0..card {
        let mut sum35 = 0.0;
        let mut idx = 0.0;
        let mut first_k: Vec<Option<i32>> = vec![None; m_top as usize + 1];
        for d in 1..tree.levels.len() {
            let k = tree.levels[d - 1].k;
            let ell = tree.levels[d].cells[owners[d][x]].ell;
            if let Some(m) = m_of(ell) {
                sum35 += r.powf(-f64::from(k) * p) / eps[ell].powf(p);
                first_k[m as usize].get_or_insert(k);
                idx += r.powf(-f64::from(k) * beta) * (ell as f64).ln().powf(alpha * beta);
            }
        }
        packing_sum = packing_sum.max(sum35);
        index_sum = index_sum.max(idx);
        let (mut s, mut s1, mut s2) = (0.0, 0.0f64, 0.0);
        for (m, k) in first_k.iter().enumerate() {
            let Some(i) = *k else { continue };
            let e = eps_table[m].used;
            let i = f64::from(i);
            s += r.powf(-i * beta) * 2f64.powf(m as f64 * alpha * beta);
            let a = 2f64.powf(m as f64 * alpha) * e;
            match beta_prime {
                Some(bp) => s1 += a.powf(bp),
                None => s1 = s1.max(a),
            }
            s2 += r.powf(-p * i) / e.powf(p);
        }
        let s1_term = match beta_prime {
            Some(_) => s1.powf(uexp),
            None => s1.powf(beta),
        };
        let rhs = s1_term * s2.powf(vexp);
        checks.le("regrouped sum splitting", s, rhs * (1.0 + 1e-12));
        checks.le("regrouped packing sum", s2, packing_bound);
        s_max = s_max.max(s);
        s1_max = s1_max.max(s1);
        s2_max = s2_max.max(s2);
        if rhs > 0.0 {
            holder_ratio = holder_ratio.max(s / rhs);
        }
    }
    checks.le("packing sum bound", packing_sum, packing_bound);
    checks.le("monotone translate functional", monotone_fix, 1e-9);

    let (measure, mrep) = tree_to_measure(&tree, alpha * beta, beta)?;
    let gamma = gamma_value(points, &spec, &measure, GammaParams::new(alpha, beta)?)?;
    let entropy = sup_entropy(points, &spec, alpha, r)?;

    // M over k ≥ 0; past the grid every point needs its own ball.
    let n_at = |eps_k: f64| -> usize {
        entropy
            .grid
            .iter()
            .rev()
            .find(|(e, _)| *e >= eps_k * (1.0 - 1e-12))
            .map_or(1, |g| g.1)
    };
    let mut terms = Vec::new();
    let mut k = 0;
    loop {
        let eps_k = r.powi(-k);
        let n = if entropy.grid.last().is_some_and(|g| g.0 > eps_k * (1.0 + 1e-12)) {
            card
        } else {
            n_at(eps_k)
        };
        terms.push((eps_k, (n as f64).ln()));
        if n >= card || k > 200 {
            break;
        }
        k += 1;
    }
    let m_entropy = match beta_prime {
        None => terms.iter().map(|(e, l)| e * l.powf(alpha)).fold(0.0, f64::max),
        Some(bp) => {
            let head: f64 = terms.iter().map(|(e, l)| (e * l.powf(alpha)).powf(bp)).sum();
            let (e_last, l_last) = *terms.last().unwrap();
            let q = r.powf(-bp);
            let tail = (e_last * l_last.powf(alpha)).powf(bp) * q / (1.0 - q);
            (head + tail).powf(1.0 / bp)
        }
    };
    let index_constant =
        (m_entropy > 0.0).then(|| index_sum * cert.gamma.powf(beta / p) / m_entropy.powf(beta));

    Ok(ConvexResult {
        report: ConvexReport {
            card,
            eps_source,
            eps_table,
            depth: tree.levels.len(),
            tree: tree_report,
            monotone_fix,
            packing_bound,
            packing_sum,
            beta_prime,
            s_max,
            s1_max,
            s2_max,
            holder_ratio,
            m_entropy,
            index_sum,
            index_constant,
            measure: mrep,
            gamma,
            ratio: (entropy.value > 0.0).then(|| gamma / entropy.value),
            entropy,
            convexity,
            checks,
        },
        tree,
        measure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_translate() {
        let b = GaugeOracle::euclidean(1);
        // 2r^{-k} = 1/2 with r = 4, k = 1.
        let v = phi_gauge(&[1.0], 1, 4.0, &b, &b).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
        assert_eq!(phi_gauge(&[0.25], 1, 4.0, &b, &b).unwrap(), 0.0);
    }

    #[test]
    fn translate_tends_to_norm() {
        let b = GaugeOracle::Ellipsoid {
            semiaxes: vec![1.0, 0.5],
        };
        let u = GaugeOracle::euclidean(2);
        let x = [0.3, 0.2];
        let v = phi_gauge(&x, 20, 4.0, &b, &u).unwrap();
        assert!((v - b.norm(&x)).abs() < 1e-9);
    }

    #[test]
    fn hilbert_ball_passes_and_large_gamma_fails() {
        let b = GaugeOracle::euclidean(3);
        let ok = convexity_check(&b, &ConvexityCert::new(2.0, 0.125).unwrap(), 4000, 1).unwrap();
        assert!(ok.passed, "{ok:?}");
        let bad = convexity_check(&b, &ConvexityCert::new(2.0, 10.0).unwrap(), 200, 1).unwrap();
        assert!(!bad.passed && bad.witness.is_some());
    }

    #[test]
    fn covering_examples() {
        assert_eq!(ellipsoid_covering(&[0.5, 0.3], 0.5).unwrap(), CoverBounds { lower: 1, upper: 1 });
        assert!(ellipsoid_covering(&[1.0, 1.0], 0.5).unwrap().lower >= 4);
        let one = ellipsoid_covering(&[1.0], 0.25).unwrap();
        assert!(one.upper <= 5 && one.lower <= one.upper, "{one:?}");
    }

    #[test]
    fn lattice_respects_budget() {
        let (pts, h) = ellipsoid_lattice(&[1.0, 0.5], 200).unwrap();
        assert!(pts.card() <= 200 && pts.card() > 100, "{}", pts.card());
        assert!(h > 0.0);
        let b = GaugeOracle::Ellipsoid {
            semiaxes: vec![1.0, 0.5],
        };
        assert!(pts.points().iter().all(|x| b.norm(x) <= 1.0 + 1e-12));
    }

    #[test]
    fn packing_upper_is_monotone() {
        let c = [1.0, 0.5];
        let mut prev = f64::INFINITY;
        for n in 2..50 {
            let e = ellipsoid_packing_upper(&c, (n as f64).ln());
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn small_ellipse_pipeline() {
        let axes = vec![1.0, 0.5];
        let (pts, _) = ellipsoid_lattice(&axes, 150).unwrap();
        let b = GaugeOracle::Ellipsoid { semiaxes: axes.clone() };
        let u = GaugeOracle::euclidean(2);
        let inst = ConvexInstance {
            points: &pts,
            b: &b,
            u: &u,
            cert: ConvexityCert::for_ellipsoid(&axes).unwrap(),
            alpha: 0.5,
            beta: 2.0,
            r: 8.0,
        };
        let res = convex_pipeline(&inst).unwrap();
        let rep = &res.report;
        assert!(rep.tree.passed(), "{:?}", rep.tree.failures);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks.failures().collect::<Vec<_>>());
        assert!(rep.beta_prime.is_none());
        assert!(rep.ratio.unwrap().is_finite());
    }
}
