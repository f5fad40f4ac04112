//! Majorizing-measure functionals `γ_{α,β}(T, d, μ)`, the entropy quantity
//! `sup_ε ε (log N)^α` and the two-ingredient size functional `θ_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::PartitionChain;
use crate::error::{invalid, Error, Result};
use crate::measure::DiscreteMeasure;
use crate::metric::{covering_number, diameter_unchecked, DistanceSpec, PointSet, BALL_TOL};
use crate::partition::{build_tree, tree_to_measure, LogPower, SyntheticPhi, TreeOptions};

/// Exponents of `γ_{α,β}`; `(1/2, 1)` is the Gaussian functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct GammaParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<(f64, f64)> for GammaParams {
    type Error = Error;

    fn try_from((alpha, beta): (f64, f64)) -> Result<Self> {
        GammaParams::new(alpha, beta)
    }
}

impl From<GammaParams> for (f64, f64) {
    fn from(p: GammaParams) -> Self {
        (p.alpha, p.beta)
    }
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("gamma exponents must be positive, got ({alpha}, {beta})")));
        }
        Ok(GammaParams { alpha, beta })
    }

    pub const GAUSSIAN: GammaParams = GammaParams {
        alpha: 0.5,
        beta: 1.0,
    };

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Ball-mass profile around one point: sorted distinct radii and the mass of
/// the closed ball at each radius.
struct Profile {
    radii: Vec<f64>,
    masses: Vec<f64>,
    /// For each atom in `mu.atoms()` order, index of the first radius whose ball holds it.
    first_piece: Vec<usize>,
}

fn profile(set: &PointSet, spec: &DistanceSpec, mu: &DiscreteMeasure, x: usize) -> Profile {
    let mut d: Vec<(f64, usize)> = mu
        .atoms()
        .iter()
        .enumerate()
        .map(|(a, &(id, _))| {
            let v = spec.between(set, x, id);
            (if v <= BALL_TOL { 0.0 } else { v }, a)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut radii: Vec<f64> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut first_piece = vec![0; d.len()];
    let mut acc = 0.0;
    for (dist, a) in d {
        acc += mu.atoms()[a].1;
        match radii.last() {
            Some(&last) if dist <= last + BALL_TOL => {
                *masses.last_mut().unwrap() = acc;
            }
            _ => {
                radii.push(dist);
                masses.push(acc);
            }
        }
        first_piece[a] = radii.len() - 1;
    }
    Profile {
        radii,
        masses,
        first_piece,
    }
}

fn log_inv(m: f64) -> f64 {
    if m >= 1.0 - 1e-12 {
        0.0
    } else {
        -m.ln()
    }
}

/// `∫_0^∞ ε^β (log 1/μ(B(x,ε)))^{αβ} dε/ε` in closed form, `+∞` when a ball of
/// positive radius around `x` carries no mass.
fn integral(p: &Profile, params: GammaParams) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    if p.radii.is_empty() || p.radii[0] > 0.0 {
        return f64::INFINITY;
    }
    let mut total = 0.0;
    for k in 0..p.radii.len().saturating_sub(1) {
        let l = log_inv(p.masses[k]);
        if l > 0.0 {
            total += l.powf(a * b) * (p.radii[k + 1].powf(b) - p.radii[k].powf(b)) / b;
        }
    }
    total
}

/// `γ_{α,β}(T, d, μ)^β` integrand value at one point, before the outer root.
pub fn gamma_integral_at(
    set: &PointSet,
    spec: &DistanceSpec,
    mu: &DiscreteMeasure,
    params: GammaParams,
    x: usize,
) -> f64 {
    integral(&profile(set, spec, mu, x), params)
}

/// Exact `γ_{α,β}(T, d, μ)` for a finitely supported `μ`; `+∞` when `μ`
/// leaves some point of `T` uncovered at small radii.
pub fn gamma_value(
    set: &PointSet,
    spec: &DistanceSpec,
    mu: &DiscreteMeasure,
    params: GammaParams,
) -> Result<f64> {
    Ok(gamma_value_witness(set, spec, mu, params)?.0)
}

/// Like [`gamma_value`], also returning the maximizing point.
pub fn gamma_value_witness(
    set: &PointSet,
    spec: &DistanceSpec,
    mu: &DiscreteMeasure,
    params: GammaParams,
) -> Result<(f64, usize)> {
    mu.check_support(set.card())?;
    let (best, x) = (0..set.card())
        .into_par_iter()
        .map(|x| (gamma_integral_at(set, spec, mu, params, x), x))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    Ok((best.powf(1.0 / params.beta), x))
}

/// Measure families available to [`gamma_upper`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    /// Partition tree from a synthetic level functional, then tree weights.
    Tree { r: f64 },
    /// Multiplicative reweighting started from the tree measure.
    LocalSearch { r: f64, rounds: usize, eta: f64 },
}

impl Strategy {
    pub fn local_search(r: f64) -> Self {
        Strategy::LocalSearch {
            r,
            rounds: 200,
            eta: 0.1,
        }
    }
}

/// A feasible measure and its functional value, an upper bound on the infimum.
pub fn gamma_upper(
    set: &PointSet,
    spec: &DistanceSpec,
    params: GammaParams,
    strategy: Strategy,
) -> Result<(DiscreteMeasure, f64)> {
    let ids = set.ids();
    if set.card() == 1 {
        return Ok((DiscreteMeasure::dirac(0), 0.0));
    }
    match strategy {
        Strategy::Uniform => {
            let mu = DiscreteMeasure::uniform(&ids)?;
            let v = gamma_value(set, spec, &mu, params)?;
            Ok((mu, v))
        }
        Strategy::Tree { r } => {
            let mu = tree_measure(set, spec, params, r)?;
            let v = gamma_value(set, spec, &mu, params)?;
            Ok((mu, v))
        }
        Strategy::LocalSearch { r, rounds, eta } => local_search(set, spec, params, r, rounds, eta),
    }
}

fn tree_measure(set: &PointSet, spec: &DistanceSpec, params: GammaParams, r: f64) -> Result<DiscreteMeasure> {
    let growth = LogPower::new(1.0, params.alpha);
    let phi = SyntheticPhi::build(set, spec, r, params.beta, &growth, None)?;
    let tree = build_tree(set, spec, &phi, &growth, r, params.beta, TreeOptions::with_k0(phi.k0()))?;
    let (mu, _) = tree_to_measure(&tree, params.alpha * params.beta, params.beta)?;
    Ok(mu)
}

fn local_search(
    set: &PointSet,
    spec: &DistanceSpec,
    params: GammaParams,
    r: f64,
    rounds: usize,
    eta: f64,
) -> Result<(DiscreteMeasure, f64)> {
    let n = set.card();
    let uniform = DiscreteMeasure::uniform(&set.ids())?;
    let uniform_value = gamma_value(set, spec, &uniform, params)?;
    let seed = tree_measure(set, spec, params, r)?;
    let seed_value = gamma_value(set, spec, &seed, params)?;
    let (mut best_mu, mut best) = if seed_value <= uniform_value {
        (seed.clone(), seed_value)
    } else {
        (uniform.clone(), uniform_value)
    };
    // Keep every point charged so reweighting can reach it.
    let mut w: Vec<f64> = seed
        .dense(n)
        .iter()
        .map(|m| 0.999 * m + 0.001 / n as f64)
        .collect();
    for _ in 0..rounds {
        let mu = DiscreteMeasure::normalized(w.iter().copied().enumerate())?;
        let (value, x) = gamma_value_witness(set, spec, &mu, params)?;
        if value < best {
            best = value;
            best_mu = mu.clone();
        }
        let grad = sensitivity(set, spec, &mu, params, x);
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi *= (eta * g / scale).exp();
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    Ok((best_mu, best))
}

/// Negative gradient of the integral at `x` with respect to each point's mass.
fn sensitivity(
    set: &PointSet,
    spec: &DistanceSpec,
    mu: &DiscreteMeasure,
    params: GammaParams,
    x: usize,
) -> Vec<f64> {
    let p = profile(set, spec, mu, x);
    let (a, b) = (params.alpha, params.beta);
    // Suffix sums so that atom a collects every piece whose ball contains it.
    let mut per_piece = vec![0.0; p.radii.len()];
    for k in 0..p.radii.len().saturating_sub(1) {
        let l = log_inv(p.masses[k]);
        if l > 0.0 {
            per_piece[k] = a * l.powf(a * b - 1.0) * (p.radii[k + 1].powf(b) - p.radii[k].powf(b))
                / p.masses[k];
        }
    }
    for k in (0..per_piece.len().saturating_sub(1)).rev() {
        per_piece[k] += per_piece[k + 1];
    }
    let mut out = vec![0.0; set.card()];
    for (atom, &(id, _)) in mu.atoms().iter().enumerate() {
        out[id] = per_piece[p.first_piece[atom]];
    }
    out
}

/// Result of [`sup_entropy`]: the value and every grid point visited.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub value: f64,
    /// `(ε, upper bound on N(S, εU))` along the grid.
    pub grid: Vec<(f64, usize)>,
}

/// `max_ε ε (log N(S, εU))^α` over the grid `ε = r^{-k}`, from the first grid
/// point at or above the diameter down to the first radius where every point
/// needs its own ball. Uses the greedy upper bound on `N`.
pub fn sup_entropy(set: &PointSet, u: &DistanceSpec, alpha: f64, r: f64) -> Result<EntropyProfile> {
    if !(r > 1.0) {
        return Err(invalid("entropy grid ratio must exceed 1"));
    }
    let ids = set.ids();
    let diam = diameter_unchecked(set, &ids, u);
    let mut grid = Vec::new();
    let mut value: f64 = 0.0;
    if diam == 0.0 {
        return Ok(EntropyProfile { value, grid });
    }
    let mut k = (-(diam.ln() / r.ln())).floor() as i32;
    while r.powi(-k) < diam {
        k -= 1;
    }
    loop {
        let eps = r.powi(-k);
        let n = covering_number(set, &ids, u, eps).upper;
        grid.push((eps, n));
        value = value.max(eps * (n as f64).ln().powf(alpha));
        if n >= set.card() {
            break;
        }
        k += 1;
    }
    Ok(EntropyProfile { value, grid })
}

/// Data for [`theta_value`]: partitions `(C_j)_{j≥i}`, a measure and the
/// truncated functionals `min(1, r^{2j}(f-g)²)` summed over coordinates.
#[derive(Clone, Debug)]
pub struct ThetaInstance<'a> {
    pub set: &'a PointSet,
    pub r: f64,
    pub chain: &'a PartitionChain,
    pub mu: &'a DiscreteMeasure,
}

/// Per-point value of `Σ_{j≥i} r^{-j}(D_j(C_j(x)) + log 1/μ(C_j(x)))` and the sup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    pub value: f64,
    pub witness: usize,
    pub per_point: Vec<f64>,
}

/// Evaluates the size functional for the given partitions and measure (not the
/// infimum over them). Past the last stored level the last partition repeats.
pub fn theta_value(inst: &ThetaInstance) -> Result<ThetaReport> {
    let ThetaInstance { set, r, chain, mu } = *inst;
    if !(r >= 4.0) {
        return Err(invalid(format!("size functional needs r >= 4, got {r}")));
    }
    if chain.card() != set.card() {
        return Err(Error::DimensionMismatch {
            expected: set.card(),
            found: chain.card(),
        });
    }
    mu.check_support(set.card())?;
    let i = chain.start;
    let last = chain.last();
    // D_j depends on j through the truncation; compute per level and cell.
    let cell_term = |j: i32, cell: &[usize]| -> f64 {
        let spec = DistanceSpec::TruncPhi { j, r };
        let d = diameter_unchecked(set, cell, &spec);
        let m = mu.mass(cell);
        let l = if m <= 0.0 { f64::INFINITY } else { log_inv(m) };
        r.powi(-j) * (d + l)
    };
    let mut per_point = vec![0.0; set.card()];
    for j in i..=last {
        for cell in chain.level(j) {
            let t = cell_term(j, cell);
            for &x in cell {
                per_point[x] += t;
            }
        }
    }
    // Tail: D_j(C) ≤ dim · (number of distinct rows) stays bounded, so terms
    // decay like r^{-j}; stop once the remaining geometric bound is negligible.
    let dim_bound = set.dim() as f64;
    for (c_idx, cell) in chain.level(last).iter().enumerate() {
        let _ = c_idx;
        let m = mu.mass(cell);
        let l = if m <= 0.0 { f64::INFINITY } else { log_inv(m) };
        let mut tail = 0.0;
        let mut j = last + 1;
        loop {
            let t = cell_term(j, cell);
            tail += t;
            let rest = r.powi(-j) * (dim_bound + l) / (r - 1.0);
            if !rest.is_finite() || rest <= 1e-16 * tail.max(1e-300) || j > last + 400 {
                break;
            }
            j += 1;
        }
        for &x in cell {
            per_point[x] += tail;
        }
    }
    let (witness, value) = per_point
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
    Ok(ThetaReport {
        value,
        witness,
        per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> PointSet {
        PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn singleton_is_zero() {
        let s = PointSet::from_rows(vec![vec![0.3, 0.1]]).unwrap();
        let v = gamma_value(&s, &DistanceSpec::L2, &DiscreteMeasure::dirac(0), GammaParams::GAUSSIAN).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn two_point_pins() {
        let s = two_points();
        let u = DiscreteMeasure::uniform(&[0, 1]).unwrap();
        let v = gamma_value(&s, &DistanceSpec::L2, &u, GammaParams::GAUSSIAN).unwrap();
        assert!((v - 2f64.ln().sqrt()).abs() < 1e-12);
        let skew = DiscreteMeasure::new([(0, 0.75), (1, 0.25)]).unwrap();
        let v = gamma_value(&s, &DistanceSpec::L2, &skew, GammaParams::GAUSSIAN).unwrap();
        assert!((v - 4f64.ln().sqrt()).abs() < 1e-12);
        assert!((v - 1.17741).abs() < 1e-5);
    }

    #[test]
    fn uncovered_point_is_infinite() {
        let s = two_points();
        let v = gamma_value(&s, &DistanceSpec::L2, &DiscreteMeasure::dirac(0), GammaParams::GAUSSIAN).unwrap();
        assert!(v.is_infinite());
    }

    #[test]
    fn theta_two_point_closed_form() {
        let s = two_points();
        for i in [-1, 0, 1] {
            let chain = PartitionChain::trivial_then_singletons(2, i).unwrap();
            let mu = DiscreteMeasure::uniform(&[0, 1]).unwrap();
            let r: f64 = 4.0;
            let rep = theta_value(&ThetaInstance {
                set: &s,
                r,
                chain: &chain,
                mu: &mu,
            })
            .unwrap();
            let expected = r.powi(-i) * r.powi(2 * i).min(1.0)
                + 2f64.ln() * r.powi(-i - 1) / (1.0 - 1.0 / r);
            assert!((rep.value - expected).abs() < 1e-12, "i={i}: {} vs {expected}", rep.value);
        }
    }

    #[test]
    fn sup_entropy_below_one_is_zero_at_top() {
        let s = PointSet::from_rows(vec![vec![-0.5], vec![0.5]]).unwrap();
        let e = sup_entropy(&s, &DistanceSpec::Linf, 0.5, 2.0).unwrap();
        assert_eq!(e.grid[0].1, 1);
        assert!((e.value - 0.5 * 2f64.ln().sqrt()).abs() < 1e-12);
    }
}
