//! Splitting `x = u(x) + v(x)` along a chain of selected points: `u(x)` follows
//! the chain coordinatewise until its first large jump, and `v(x)` is what is
//! left over.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::PartitionChain;
use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_value, theta_value, GammaParams, ThetaInstance};
use crate::measure::DiscreteMeasure;
use crate::metric::{diameter_unchecked, DistanceSpec, PointSet};
use crate::report::Checks;

/// A chain of partitions with a selected point `y(C) ∈ C` in every cell and a
/// root `y(T)` standing for the level just before the chain starts.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainMaps {
    chain: PartitionChain,
    root: usize,
    select: Vec<Vec<usize>>,
    consistent: bool,
}

impl ChainMaps {
    /// With `consistent` set, a child holding its parent's selection must
    /// select the same point, i.e. `π_{j+1}(π_j(x)) = π_j(x)` for all `j`.
    pub fn new(chain: PartitionChain, root: usize, select: Vec<Vec<usize>>, consistent: bool) -> Result<Self> {
        let card = chain.card();
        if root >= card {
            return Err(invalid(format!("root selection {root} outside {card} points")));
        }
        if select.len() != chain.levels.len() {
            return Err(invalid("need one selection list per level"));
        }
        for (d, (level, sel)) in chain.levels.iter().zip(&select).enumerate() {
            let j = chain.start + d as i32;
            if sel.len() != level.len() {
                return Err(invalid(format!("level {j} needs one selection per cell")));
            }
            for (c, (cell, &y)) in level.iter().zip(sel).enumerate() {
                if !cell.contains(&y) {
                    return Err(Error::Precondition(format!(
                        "selection {y} lies outside cell {c} of level {j}"
                    )));
                }
            }
        }
        let maps = ChainMaps {
            chain,
            root,
            select,
            consistent,
        };
        if consistent {
            let (start, last) = (maps.chain.start, maps.chain.last());
            for x in 0..card {
                for j in (start - 1)..last {
                    let y = maps.pi(j, x);
                    if maps.pi(j + 1, y) != y {
                        return Err(Error::Precondition(format!(
                            "selections are not consistent: point {y} selected at level {j} \
                             is not selected in its own cell at level {}",
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(maps)
    }

    /// Root `0`; each cell keeps its parent's selection when it holds it and
    /// otherwise selects its lowest id. Consistent by construction.
    pub fn consistent(chain: PartitionChain) -> Self {
        let root = 0;
        let mut select: Vec<Vec<usize>> = Vec::with_capacity(chain.levels.len());
        for (d, level) in chain.levels.iter().enumerate() {
            let j = chain.start + d as i32;
            let sel = level
                .iter()
                .map(|cell| {
                    let inherited = if d == 0 {
                        root
                    } else {
                        select[d - 1][chain.cell_index(j - 1, cell[0])]
                    };
                    if cell.contains(&inherited) {
                        inherited
                    } else {
                        *cell.iter().min().expect("cells are nonempty")
                    }
                })
                .collect();
            select.push(sel);
        }
        ChainMaps {
            chain,
            root,
            select,
            consistent: true,
        }
    }

    /// Lowest id of every cell, root `0`, no consistency claimed.
    pub fn lowest(chain: PartitionChain) -> Self {
        let select = chain
            .levels
            .iter()
            .map(|l| l.iter().map(|c| *c.iter().min().expect("cells are nonempty")).collect())
            .collect();
        ChainMaps {
            chain,
            root: 0,
            select,
            consistent: false,
        }
    }

    pub fn chain(&self) -> &PartitionChain {
        &self.chain
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    /// Selection of the cell at level `d` (counted from the chain start).
    pub fn selection(&self, d: usize, c: usize) -> usize {
        self.select[d][c]
    }

    /// `π_j(x)`: the root before the chain starts, the last level's selection past its end.
    pub fn pi(&self, j: i32, x: usize) -> usize {
        if j < self.chain.start {
            return self.root;
        }
        let d = ((j - self.chain.start) as usize).min(self.select.len() - 1);
        self.select[d][self.chain.cell_index(j, x)]
    }
}

/// `x = u(x) + v(x)` for every point. Stopping levels are per coordinate,
/// `None` standing for `∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub ell: Vec<Vec<Option<i32>>>,
    pub m: Vec<Vec<Option<i32>>>,
    /// Id of the point whose coordinate `u(x)` copies (`x` itself when `ℓ = ∞`).
    pub source: Vec<Vec<usize>>,
}

impl SplitResult {
    /// `U = {u(x)}`, one row per point of `T` (rows may repeat).
    pub fn u_set(&self) -> Result<PointSet> {
        PointSet::from_rows(self.u.clone())
    }
}

type Threshold<'a> = &'a (dyn Fn(i32) -> f64 + Sync);

/// `ℓ = inf{j ≥ from : |π_j - π_{j+1}| > jump(j)}` (`≥` unless `strict`) and
/// `m = inf{j ≥ from : |x - π_{j+1}| > near(j)}`, coordinatewise.
struct Rule<'a> {
    from: i32,
    jump: Threshold<'a>,
    strict: bool,
    near: Threshold<'a>,
}

fn stops(set: &PointSet, maps: &ChainMaps, x: usize, w: usize, rule: &Rule) -> (Option<i32>, Option<i32>) {
    let last = maps.chain.last();
    let coord = |id: usize| set.point(id)[w];
    let mut ell = None;
    for j in rule.from..last {
        let d = (coord(maps.pi(j, x)) - coord(maps.pi(j + 1, x))).abs();
        let t = (rule.jump)(j);
        if d > t || (!rule.strict && d == t) {
            ell = Some(j);
            break;
        }
    }
    let xv = coord(x);
    let mut m = None;
    for j in rule.from..last {
        if (xv - coord(maps.pi(j + 1, x))).abs() > (rule.near)(j) {
            m = Some(j);
            break;
        }
    }
    if m.is_none() {
        // Past the last level π is constant, so m is where the threshold drops below the gap.
        let gap = (xv - coord(maps.pi(last, x))).abs();
        if gap > 0.0 {
            let mut j = last.max(rule.from);
            while !(gap > (rule.near)(j)) {
                j += 1;
            }
            m = Some(j);
        }
    }
    (ell, m)
}

fn run_split(set: &PointSet, maps: &ChainMaps, rule: &Rule) -> SplitResult {
    let dim = set.dim();
    let rows: Vec<_> = (0..set.card())
        .into_par_iter()
        .map(|x| {
            let mut row = (Vec::with_capacity(dim), Vec::with_capacity(dim), Vec::new(), Vec::new(), Vec::new());
            for w in 0..dim {
                let (ell, m) = stops(set, maps, x, w, rule);
                let src = ell.map_or(x, |l| maps.pi(l, x));
                let u = set.point(src)[w];
                row.0.push(u);
                row.1.push(set.point(x)[w] - u);
                row.2.push(ell);
                row.3.push(m);
                row.4.push(src);
            }
            row
        })
        .collect();
    let mut out = SplitResult {
        u: Vec::new(),
        v: Vec::new(),
        ell: Vec::new(),
        m: Vec::new(),
        source: Vec::new(),
    };
    for (u, v, ell, m, src) in rows {
        out.u.push(u);
        out.v.push(v);
        out.ell.push(ell);
        out.m.push(m);
        out.source.push(src);
    }
    out
}

fn le_inf(a: Option<i32>, b: Option<i32>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(a), Some(b)) => a <= b,
    }
}

fn common_checks(set: &PointSet, s: &SplitResult, checks: &mut Checks) {
    for x in 0..set.card() {
        for (w, &xv) in set.point(x).iter().enumerate() {
            let u = s.u[x][w];
            checks.holds("exact additivity", xv - u == s.v[x][w], || format!("point {x} coordinate {w}"));
            // One rounding in v = x - u and one in u + v.
            checks.le_detail("reassembly rounding", (u + s.v[x][w] - xv).abs(), f64::EPSILON * (xv.abs() + u.abs()), || {
                format!("point {x} coordinate {w}")
            });
            checks.holds("stopping order", le_inf(s.m[x][w], s.ell[x][w]), || {
                format!("point {x} coordinate {w}: m = {:?}, ell = {:?}", s.m[x][w], s.ell[x][w])
            });
        }
    }
}

fn check_inputs(set: &PointSet, maps: &ChainMaps, mu: &DiscreteMeasure) -> Result<()> {
    if maps.chain.card() != set.card() {
        return Err(Error::DimensionMismatch {
            expected: set.card(),
            found: maps.chain.card(),
        });
    }
    mu.check_support(set.card())
}

fn check_sup_ball(set: &PointSet, bound: f64, label: &str) -> Result<()> {
    for x in 0..set.card() {
        for (w, v) in set.point(x).iter().enumerate() {
            if !(v.abs() <= bound) {
                return Err(Error::Precondition(format!(
                    "point {x} has |coordinate {w}| = {} above {label} = {bound}",
                    v.abs()
                )));
            }
        }
    }
    Ok(())
}

/// Mass `2^{-(j-start+1)} μ(C)` at the selection of every cell, the last level
/// taking the remaining `2^{-(last-start)} μ(C)`.
pub(crate) fn selection_measure(maps: &ChainMaps, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let chain = &maps.chain;
    let depth = chain.levels.len();
    let mut atoms = Vec::new();
    for (d, level) in chain.levels.iter().enumerate() {
        let w = if d + 1 == depth {
            2f64.powi(-(d as i32))
        } else {
            2f64.powi(-(d as i32) - 1)
        };
        for (c, cell) in level.iter().enumerate() {
            atoms.push((maps.select[d][c], w * mu.mass(cell)));
        }
    }
    DiscreteMeasure::normalized(atoms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1SplitReport {
    pub i: i32,
    pub r: f64,
    /// Size functional of the given partitions and measure.
    pub theta: f64,
    /// `sup_x ‖v(x)‖₁`.
    pub l1_max: f64,
    /// `sup_x Σ_ω 2 r^{-m(x,ω)}`.
    pub stop_sum_max: f64,
    /// Diameter of `T` for the truncated functional at level `i - 1`.
    pub root_diameter: f64,
    pub gamma1_inf: f64,
    pub gamma_half: f64,
    /// `γ_1(U, ‖·‖_∞) / (θ̂ + r^{-i})`.
    pub ratio_inf: f64,
    /// `γ_{1/2}(U) / (θ̂ + r^{-i} + r^{-i+1} D^{1/2})` with `D` the root diameter.
    pub ratio_half_sqrt: f64,
    /// The same with `D` in place of `D^{1/2}`.
    pub ratio_half_linear: f64,
    pub checks: Checks,
}

/// Splits `T ⊂ r^{-i} B_∞ / 4` into `U + V` with `V` small in `ℓ1`, jumping
/// when `|π_j - π_{j+1}| > r^{-j}` (chain levels `j ≥ i`, root at `i - 1`).
pub fn split_into_l1(
    set: &PointSet,
    maps: &ChainMaps,
    mu: &DiscreteMeasure,
    r: f64,
    i: i32,
) -> Result<(SplitResult, L1SplitReport)> {
    check_inputs(set, maps, mu)?;
    if !(r >= 4.0) {
        return Err(invalid(format!("r must be at least 4, got {r}")));
    }
    let chain = &maps.chain;
    if chain.start != i {
        return Err(invalid(format!("chain starts at {} but i = {i}", chain.start)));
    }
    check_sup_ball(set, r.powi(-i) / 4.0, "r^-i/4")?;

    let jump = |j: i32| r.powi(-j);
    let near = |j: i32| r.powi(-j - 1) / 2.0;
    let s = run_split(
        set,
        maps,
        &Rule {
            from: i - 1,
            jump: &jump,
            strict: true,
            near: &near,
        },
    );
    let theta = theta_value(&ThetaInstance { set, r, chain, mu })?.value;
    let mut checks = Checks::new();
    common_checks(set, &s, &mut checks);

    let (card, dim) = (set.card(), set.dim());
    let (mut l1_max, mut stop_sum_max): (f64, f64) = (0.0, 0.0);
    for x in 0..card {
        let mut stop_sum = 0.0;
        for w in 0..dim {
            let v = s.v[x][w];
            match s.m[x][w] {
                None => checks.holds("remainder size", v == 0.0, || format!("point {x} coordinate {w}")),
                Some(m) => {
                    stop_sum += 2.0 * r.powi(-m);
                    checks.le_detail("remainder size", v.abs(), 2.0 * r.powi(-m), || {
                        format!("point {x} coordinate {w}")
                    })
                }
            };
        }
        let l1: f64 = s.v[x].iter().map(|v| v.abs()).sum();
        checks.le_detail("l1 remainder via stopping levels", l1, stop_sum, || format!("point {x}"));
        l1_max = l1_max.max(l1);
        stop_sum_max = stop_sum_max.max(stop_sum);
    }
    checks.le("l1 remainder", l1_max, 8.0 * r * theta);

    // Same-cell points have close u in sup norm.
    for j in i..=chain.last() {
        let bound = 4.0 * r.powi(-j);
        for cell in chain.level(j) {
            for (a, &x) in cell.iter().enumerate() {
                for &y in &cell[a + 1..] {
                    let d = DistanceSpec::Linf.eval(&s.u[x], &s.u[y]);
                    checks.le_detail("same-cell sup distance", d, bound, || format!("level {j} points {x}, {y}"));
                }
            }
        }
    }

    if maps.consistent {
        chain_increment_checks(set, maps, &s, r, &mut checks);
    }

    let u_set = s.u_set()?;
    let nu = selection_measure(maps, mu)?;
    let gamma1_inf = gamma_value(&u_set, &DistanceSpec::Linf, &nu, GammaParams::new(1.0, 1.0)?)?;
    let gamma_half = gamma_value(&u_set, &DistanceSpec::L2, &nu, GammaParams::new(0.5, 1.0)?)?;
    let root_diameter = diameter_unchecked(set, &set.ids(), &DistanceSpec::TruncPhi { j: i - 1, r });
    let base = theta + r.powi(-i);
    let report = L1SplitReport {
        i,
        r,
        theta,
        l1_max,
        stop_sum_max,
        root_diameter,
        gamma1_inf,
        gamma_half,
        ratio_inf: gamma1_inf / base,
        ratio_half_sqrt: gamma_half / (base + r.powi(1 - i) * root_diameter.sqrt()),
        ratio_half_linear: gamma_half / (base + r.powi(1 - i) * root_diameter),
        checks,
    };
    Ok((s, report))
}

/// `‖u(x) - u(π_j(x))‖₂ ≤ Σ_{ℓ≥j} r^{-ℓ} D_ℓ(C_ℓ(x))^{1/2}`, valid for consistent selections.
fn chain_increment_checks(set: &PointSet, maps: &ChainMaps, s: &SplitResult, r: f64, checks: &mut Checks) {
    let chain = &maps.chain;
    let (start, last) = (chain.start, chain.last());
    let term = |j: i32, cell: &[usize]| r.powi(-j) * diameter_unchecked(set, cell, &DistanceSpec::TruncPhi { j, r }).sqrt();
    let terms: Vec<Vec<f64>> = (start..=last)
        .map(|j| chain.level(j).iter().map(|c| term(j, c)).collect())
        .collect();
    // Past the last level the functional grows to at most `dim`; sum until the
    // geometric remainder is negligible, then add that remainder.
    let root_dim = (set.dim() as f64).sqrt();
    let tails: Vec<f64> = chain
        .level(last)
        .iter()
        .map(|cell| {
            if cell.len() == 1 {
                return 0.0;
            }
            let mut sum = 0.0;
            let mut j = last + 1;
            loop {
                sum += term(j, cell);
                let rest = r.powi(-j - 1) * root_dim * r / (r - 1.0);
                if rest <= 1e-17 * sum || rest < 1e-300 || j > last + 400 {
                    return sum + rest;
                }
                j += 1;
            }
        })
        .collect();
    for x in 0..set.card() {
        let mut rhs = tails[chain.cell_index(last, x)];
        for j in (start..=last).rev() {
            rhs += terms[(j - start) as usize][chain.cell_index(j, x)];
            let y = maps.pi(j, x);
            let lhs = DistanceSpec::L2.eval(&s.u[x], &s.u[y]);
            checks.le_detail("chain increment bound", lhs, rhs * (1.0 + 1e-12), || {
                format!("point {x} level {j}")
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakSplitReport {
    pub p: f64,
    pub gamma_exp: f64,
    pub r: f64,
    /// Allowed cell diameter is `diam_factor · r^{-j}` for the truncated distance at level `j`.
    pub diam_factor: f64,
    /// `1/2 + 1/(1 - r^{-2γ})`: `|v| ≤ k_pointwise · r^{-2γ m}`.
    pub k_pointwise: f64,
    /// Bound on `‖v(x)‖_{p,∞}` implied by the stopping-mass bound.
    pub k_weak: f64,
    pub weak_max: f64,
    /// `sup_x Σ_{j≥0} r^{-j} √(log 1/μ(C_j(x)))`, tail included.
    pub s_value: f64,
    pub gamma_half: f64,
    pub gamma_over_s: f64,
    pub weak_over_s: f64,
    pub checks: Checks,
}

/// `max_k |v|_(k) k^{1/p}` over the decreasing rearrangement, which equals
/// `sup_t t · card{|v| ≥ t}^{1/p}`.
pub fn weak_lp_norm(v: &[f64], p: f64) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a.iter()
        .enumerate()
        .map(|(k, x)| x * ((k + 1) as f64).powf(1.0 / p))
        .fold(0.0, f64::max)
}

/// Checks that every cell of level `j` has diameter at most `c r^{-j}` for the
/// truncated distance `(Σ min(Δ², r^{-4γj}))^{1/2}`, continuing past the last
/// level until the bound holds automatically.
fn check_cell_diameters(set: &PointSet, chain: &PartitionChain, r: f64, gamma: f64, c: f64) -> Result<()> {
    let root_dim = (set.dim() as f64).sqrt();
    let mut j = chain.start;
    loop {
        if j > chain.last() && root_dim * r.powf(-2.0 * gamma * f64::from(j)) <= c * r.powi(-j) {
            return Ok(());
        }
        let spec = DistanceSpec::TruncD { i: j, r, gamma_exp: gamma };
        for (ci, cell) in chain.level(j).iter().enumerate() {
            let d = diameter_unchecked(set, cell, &spec);
            if d > c * r.powi(-j) {
                return Err(Error::Precondition(format!(
                    "cell {ci} of level {j} has truncated diameter {d} above {}",
                    c * r.powi(-j)
                )));
            }
        }
        j += 1;
    }
}

/// Splits `T ⊂ B_∞/4` into `U + V` with `V` in a multiple of the weak-`ℓp`
/// ball. Jumps happen when `|π_j - π_{j+1}| ≥ r^{-2γj}`, `γ = 1/(2-p)`; cells
/// of level `j` must have truncated diameter at most `diam_factor · r^{-j}`.
pub fn split_into_weak_lp(
    set: &PointSet,
    maps: &ChainMaps,
    mu: &DiscreteMeasure,
    r: f64,
    p: f64,
    diam_factor: f64,
) -> Result<(SplitResult, WeakSplitReport)> {
    check_inputs(set, maps, mu)?;
    if !(1.0..2.0).contains(&p) {
        return Err(invalid(format!("p must lie in [1, 2), got {p}")));
    }
    if !(r >= 2.0) {
        return Err(invalid(format!("r must be at least 2, got {r}")));
    }
    if !(diam_factor >= 1.0 && diam_factor.is_finite()) {
        return Err(invalid("diameter factor must be at least 1"));
    }
    let chain = &maps.chain;
    if chain.start != 0 {
        return Err(invalid("the chain must start at level 0"));
    }
    let gamma = 1.0 / (2.0 - p);
    check_sup_ball(set, 0.25, "1/4")?;
    check_cell_diameters(set, chain, r, gamma, diam_factor)?;

    let thr = |j: i32| r.powf(-2.0 * gamma * f64::from(j));
    let near = |j: i32| thr(j + 1) / 2.0;
    let s = run_split(
        set,
        maps,
        &Rule {
            from: 0,
            jump: &thr,
            strict: false,
            near: &near,
        },
    );
    let mut checks = Checks::new();
    common_checks(set, &s, &mut checks);

    let c = diam_factor;
    let k_pointwise = 0.5 + 1.0 / (1.0 - r.powf(-2.0 * gamma));
    let pg = p * gamma;
    let k_weak = (4.0 * c * c * k_pointwise.powf(p) * r.powf(2.0 * pg) / (1.0 - r.powf(-2.0 * pg))).powf(1.0 / p);
    let (card, dim) = (set.card(), set.dim());
    let last = chain.last();
    let mut weak_max: f64 = 0.0;
    for x in 0..card {
        let mut hits: Vec<usize> = Vec::new();
        for w in 0..dim {
            let v = s.v[x][w];
            match s.m[x][w] {
                None => {
                    checks.holds("remainder size", v == 0.0, || format!("point {x} coordinate {w}"));
                }
                Some(m) => {
                    checks.le_detail("remainder size", v.abs(), k_pointwise * thr(m), || {
                        format!("point {x} coordinate {w}")
                    });
                    let m = m as usize;
                    if hits.len() <= m {
                        hits.resize(m + 1, 0);
                    }
                    hits[m] += 1;
                }
            }
        }
        for (k, &h) in hits.iter().enumerate() {
            let bound = 4.0 * c * c * r.powf(2.0 * (2.0 * gamma - 1.0) * (k as f64 + 1.0));
            checks.le_detail("stopping mass", h as f64, bound, || format!("point {x} level {k}"));
        }
        // Deviation from π_k on coordinates that have not jumped before k.
        for k in 0..=last + 1 {
            let pk = set.point(maps.pi(k, x));
            let dev: f64 = (0..dim)
                .filter(|&w| le_inf(Some(k), s.ell[x][w]))
                .map(|w| (s.u[x][w] - pk[w]).powi(2))
                .sum::<f64>()
                .sqrt();
            checks.le_detail("chain deviation", dev, 2.0 * c * r.powi(-k), || format!("point {x} level {k}"));
        }
        let wn = weak_lp_norm(&s.v[x], p);
        checks.le_detail("weak remainder", wn, k_weak, || format!("point {x}"));
        weak_max = weak_max.max(wn);
    }

    let s_value = entropy_sum(maps, mu, r);
    let u_set = s.u_set()?;
    let nu = selection_measure(maps, mu)?;
    let gamma_half = gamma_value(&u_set, &DistanceSpec::L2, &nu, GammaParams::new(0.5, 1.0)?)?;
    let ratio = |a: f64| if s_value > 0.0 { a / s_value } else if a == 0.0 { 0.0 } else { f64::INFINITY };
    let report = WeakSplitReport {
        p,
        gamma_exp: gamma,
        r,
        diam_factor,
        k_pointwise,
        k_weak,
        weak_max,
        s_value,
        gamma_half,
        gamma_over_s: ratio(gamma_half),
        weak_over_s: ratio(weak_max),
        checks,
    };
    Ok((s, report))
}

/// `sup_x Σ_{j ≥ start} r^{-(j-start)} √(log 1/μ(C_j(x)))` with the repeated last level summed.
pub(crate) fn entropy_sum(maps: &ChainMaps, mu: &DiscreteMeasure, r: f64) -> f64 {
    let chain = &maps.chain;
    let (start, last) = (chain.start, chain.last());
    let log_term = |m: f64| if m >= 1.0 { 0.0 } else if m <= 0.0 { f64::INFINITY } else { (-m.ln()).sqrt() };
    let mut best: f64 = 0.0;
    for x in 0..chain.card() {
        let mut s = 0.0;
        for j in start..=last {
            s += r.powi(start - j) * log_term(mu.mass(chain.cell(j, x)));
        }
        s += r.powi(start - last - 1) / (1.0 - 1.0 / r) * log_term(mu.mass(chain.cell(last, x)));
        best = best.max(s);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> PointSet {
        PointSet::from_rows(vec![vec![0.0, 0.0], vec![0.125, -0.0625]]).unwrap()
    }

    #[test]
    fn consistent_builder_and_tampering() {
        let chain = PartitionChain::new(
            3,
            0,
            vec![vec![vec![0, 1, 2]], vec![vec![0, 1], vec![2]], vec![vec![0], vec![1], vec![2]]],
        )
        .unwrap();
        let maps = ChainMaps::consistent(chain.clone());
        assert_eq!(maps.pi(-1, 2), 0);
        assert_eq!(maps.pi(1, 1), 0);
        assert_eq!(maps.pi(2, 1), 1);
        // Selecting 1 at level 1 while 0 was selected above breaks the rule.
        let bad = ChainMaps::new(chain, 0, vec![vec![0], vec![1, 2], vec![0, 1, 2]], true);
        assert!(matches!(bad, Err(Error::Precondition(_))));
    }

    #[test]
    fn single_cell_chain_keeps_points() {
        // One cell at every level: π never jumps, so u = x and v = 0.
        let s = two_points();
        let chain = PartitionChain::new(2, 0, vec![vec![vec![0, 1]]]).unwrap();
        let maps = ChainMaps::consistent(chain);
        let mu = DiscreteMeasure::dirac(0);
        let (res, rep) = split_into_l1(&s, &maps, &mu, 4.0, 0).unwrap();
        assert_eq!(res.ell, vec![vec![None, None]; 2]);
        assert_eq!(res.v, vec![vec![0.0, 0.0]; 2]);
        // Both gaps first exceed r^{-j-1}/2 at j = 1 (threshold 1/32).
        assert_eq!(res.m[1], vec![Some(1), Some(1)]);
        assert!(rep.checks.get("exact additivity").unwrap().passed);
    }

    #[test]
    fn selected_points_are_fixed() {
        let s = two_points();
        let maps = ChainMaps::consistent(PartitionChain::trivial_then_singletons(2, 0).unwrap());
        let mu = DiscreteMeasure::uniform(&[0, 1]).unwrap();
        let (res, rep) = split_into_l1(&s, &maps, &mu, 4.0, 0).unwrap();
        assert_eq!(res.u[0], s.point(0));
        assert_eq!(res.v[0], vec![0.0, 0.0]);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks);
    }

    #[test]
    fn sup_ball_precondition() {
        let s = PointSet::from_rows(vec![vec![0.0], vec![0.5]]).unwrap();
        let maps = ChainMaps::consistent(PartitionChain::trivial_then_singletons(2, 0).unwrap());
        let err = split_into_l1(&s, &maps, &DiscreteMeasure::dirac(0), 4.0, 0).unwrap_err();
        assert!(err.to_string().contains("coordinate 0"), "{err}");
    }

    #[test]
    fn weak_norm_matches_definition() {
        let v = [0.3, -1.0, 0.0, 0.25, 0.3];
        let p = 1.5;
        // sup over breakpoints t = |v_k| of t · #{|v| ≥ t}^{1/p}.
        let brute = v
            .iter()
            .map(|t: &f64| {
                let t = t.abs();
                let n = v.iter().filter(|x| x.abs() >= t).count() as f64;
                t * n.powf(1.0 / p)
            })
            .fold(0.0, f64::max);
        assert_eq!(weak_lp_norm(&v, p), brute);
        assert_eq!(weak_lp_norm(&[0.0; 3], p), 0.0);
    }

    #[test]
    fn weak_split_hand_trace() {
        // p = 1, γ = 1, r = 4: jump thresholds 4^{-2j}.
        let s = PointSet::from_rows(vec![vec![0.0], vec![0.1875]]).unwrap();
        let maps = ChainMaps::consistent(PartitionChain::trivial_then_singletons(2, 0).unwrap());
        let mu = DiscreteMeasure::uniform(&[0, 1]).unwrap();
        let (res, rep) = split_into_weak_lp(&s, &maps, &mu, 4.0, 1.0, 1.0).unwrap();
        // Point 1: π_0 = 0, π_1 = 1, jump 0.1875 < 1, then no more jumps: u = x.
        assert_eq!(res.ell[1], vec![None]);
        assert_eq!(res.v[1], vec![0.0]);
        // |x - π_1| = 0 and |x - π_0| ≤ 1/2, so m = ∞ for both points.
        assert_eq!(res.m[1], vec![None]);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks);
        assert_eq!(rep.weak_max, 0.0);
    }
}
