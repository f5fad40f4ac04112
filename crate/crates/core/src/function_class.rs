//! Piecewise linear functions on `[0, 1]`, the convex slope penalty
//! `Ξ(f) = ∫ ξ(f')`, dyadic interval selection by mean slope, one step of the
//! approximate-or-interpolate procedure, and a `γ_{1,2}` experiment on finite
//! subsets of the class `{∫ f = 0, ∫|f'| ≤ 1}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_value, GammaParams};
use crate::metric::{DistanceSpec, PointSet};
use crate::partition::{build_tree, tree_to_measure, verify_tree, LevelFunctional, LogPower, TreeOptions};
use crate::report::Checks;

/// Finest dyadic resolution accepted (`2^24` pieces).
pub const MAX_RESOLUTION: u32 = 24;

/// Continuous function, linear on each `[k 2^{-L}, (k+1) 2^{-L}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPl")]
pub struct PLFunction {
    resolution: u32,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPl {
    resolution: u32,
    values: Vec<f64>,
}

impl TryFrom<RawPl> for PLFunction {
    type Error = Error;

    fn try_from(raw: RawPl) -> Result<Self> {
        PLFunction::new(raw.resolution, raw.values)
    }
}

impl PLFunction {
    /// `values[k] = f(k 2^{-L})`, `2^L + 1` of them.
    pub fn new(resolution: u32, values: Vec<f64>) -> Result<Self> {
        if resolution > MAX_RESOLUTION {
            return Err(invalid(format!("resolution {resolution} exceeds {MAX_RESOLUTION}")));
        }
        let n = (1usize << resolution) + 1;
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("function values must be finite"));
        }
        Ok(PLFunction { resolution, values })
    }

    /// Samples `f` on the grid of resolution `L`.
    pub fn from_fn(resolution: u32, f: impl Fn(f64) -> f64) -> Result<Self> {
        if resolution > MAX_RESOLUTION {
            return Err(invalid(format!("resolution {resolution} exceeds {MAX_RESOLUTION}")));
        }
        let n = 1usize << resolution;
        Self::new(resolution, (0..=n).map(|k| f(k as f64 / n as f64)).collect())
    }

    pub fn zero(resolution: u32) -> Result<Self> {
        Self::from_fn(resolution, |_| 0.0)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pieces(&self) -> usize {
        self.values.len() - 1
    }

    pub fn step(&self) -> f64 {
        1.0 / self.pieces() as f64
    }

    /// Slope on piece `k`.
    pub fn slope(&self, k: usize) -> f64 {
        (self.values[k + 1] - self.values[k]) * self.pieces() as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.pieces();
        let t = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let k = (t.floor() as usize).min(n - 1);
        let s = t - k as f64;
        self.values[k] * (1.0 - s) + self.values[k + 1] * s
    }

    /// `∫|f'|` over breakpoints `lo..hi`.
    pub fn variation_on(&self, lo: usize, hi: usize) -> f64 {
        self.values[lo..=hi].windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    pub fn total_variation(&self) -> f64 {
        self.variation_on(0, self.pieces())
    }

    pub fn integral(&self) -> f64 {
        self.step() * self.values.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum::<f64>()
    }

    /// `f - ∫f`.
    pub fn centered(&self) -> Self {
        let m = self.integral();
        PLFunction {
            resolution: self.resolution,
            values: self.values.iter().map(|v| v - m).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        PLFunction {
            resolution: self.resolution,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Same function on a finer grid.
    pub fn refined(&self, resolution: u32) -> Result<Self> {
        if resolution < self.resolution {
            return Err(invalid("refinement cannot lower the resolution"));
        }
        Self::from_fn(resolution, |x| self.eval(x))
    }

    /// Linear interpolation of `f` at the points `i 2^{-j}`, kept at resolution `L`.
    pub fn dyadic_interpolant(&self, j: u32) -> Self {
        if j >= self.resolution {
            return self.clone();
        }
        let stride = 1usize << (self.resolution - j);
        let mut out = self.clone();
        for a in (0..self.pieces()).step_by(stride) {
            out.linearize(a, a + stride);
        }
        out
    }

    /// Replaces the values strictly between breakpoints `lo` and `hi` by the chord.
    pub fn linearize(&mut self, lo: usize, hi: usize) {
        let (a, b) = (self.values[lo], self.values[hi]);
        let n = (hi - lo) as f64;
        for k in lo + 1..hi {
            let s = (k - lo) as f64 / n;
            self.values[k] = a * (1.0 - s) + b * s;
        }
    }

    fn same_grid(&self, other: &PLFunction) -> Result<(PLFunction, PLFunction)> {
        let l = self.resolution.max(other.resolution);
        Ok((self.refined(l)?, other.refined(l)?))
    }

    /// `∫_{lo h}^{hi h} (f - g)²`, exact for piecewise linear `f - g`.
    pub fn sq_dist_on(&self, other: &PLFunction, lo: usize, hi: usize) -> Result<f64> {
        if self.resolution != other.resolution {
            return Err(invalid("functions must share a resolution"));
        }
        let h = self.step();
        Ok(h * (lo..hi)
            .map(|k| {
                let a = self.values[k] - other.values[k];
                let b = self.values[k + 1] - other.values[k + 1];
                (a * a + a * b + b * b) / 3.0
            })
            .sum::<f64>())
    }

    /// `‖f - g‖₂`, refining to a common grid.
    pub fn l2_dist(&self, other: &PLFunction) -> Result<f64> {
        let (a, b) = self.same_grid(other)?;
        Ok(a.sq_dist_on(&b, 0, a.pieces())?.sqrt())
    }

    /// Coordinates `y` with `‖y(f) - y(g)‖₂ = ‖f - g‖_{L²}`, from the Cholesky
    /// factor of the tridiagonal mass matrix of hat functions.
    pub fn l2_coords(&self) -> Vec<f64> {
        let (n, h) = (self.pieces(), self.step());
        let diag = |k: usize| if k == 0 || k == n { h / 3.0 } else { 2.0 * h / 3.0 };
        let off = h / 6.0;
        let mut d = vec![0.0; n + 1];
        let mut e = vec![0.0; n];
        d[0] = diag(0).sqrt();
        for k in 0..n {
            e[k] = off / d[k];
            d[k + 1] = (diag(k + 1) - e[k] * e[k]).sqrt();
        }
        (0..=n)
            .map(|k| d[k] * self.values[k] + if k < n { e[k] * self.values[k + 1] } else { 0.0 })
            .collect()
    }
}

/// `ξ(0) = 0`, even, `ξ'(x) = 1 - (1+x)^{-θ}/2` for `x > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Xi {
    theta: f64,
}

impl Xi {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid(format!("theta must be positive, got {theta}")));
        }
        Ok(Xi { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `|x| - ((1+|x|)^{1-θ} - 1) / (2(1-θ))`, or `|x| - ln(1+|x|)/2` at `θ = 1`.
    pub fn value(&self, x: f64) -> f64 {
        let a = x.abs();
        let s = 1.0 - self.theta;
        if s.abs() < 1e-12 {
            a - a.ln_1p() / 2.0
        } else {
            a - (s * a.ln_1p()).exp_m1() / (2.0 * s)
        }
    }

    /// `ξ'`, taking `0` at the kink.
    pub fn derivative(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let d = 1.0 - 0.5 * (1.0 + x.abs()).powf(-self.theta);
        d.copysign(x)
    }

    /// `∫ ξ(f')` over breakpoints `lo..hi`.
    pub fn integral_on(&self, f: &PLFunction, lo: usize, hi: usize) -> f64 {
        let h = f.step();
        (lo..hi).map(|k| h * self.value(f.slope(k))).sum()
    }

    /// `Ξ(f)`.
    pub fn total(&self, f: &PLFunction) -> f64 {
        self.integral_on(f, 0, f.pieces())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiReport {
    pub theta: f64,
    /// `2^{-L} ξ(slope)` per piece.
    pub per_piece: Vec<f64>,
    pub total: f64,
    pub variation: f64,
    pub checks: Checks,
}

/// Grid points for the pointwise properties of `ξ`: `10^4` points spread over
/// `[-X, X]` with `X` covering every slope of `f`.
fn xi_grid(extent: f64) -> Vec<f64> {
    let n = 10_000;
    (0..n).map(|i| -extent + 2.0 * extent * i as f64 / (n - 1) as f64).collect()
}

/// `Ξ(f)` piece by piece, with the pointwise bounds `ξ(x) ≤ |x|`, `|ξ'| ≤ 1`
/// and the convexity of `ξ` checked on a grid.
pub fn xi_functional(f: &PLFunction, theta: f64) -> Result<XiReport> {
    let xi = Xi::new(theta)?;
    let per_piece: Vec<f64> = (0..f.pieces()).map(|k| f.step() * xi.value(f.slope(k))).collect();
    let total: f64 = per_piece.iter().sum();
    let variation = f.total_variation();
    let extent = (0..f.pieces()).map(|k| f.slope(k).abs()).fold(10.0, f64::max);
    let mut checks = Checks::new();
    let grid = xi_grid(extent);
    let mut prev = f64::NEG_INFINITY;
    for &x in &grid {
        checks.le_detail("xi below identity", xi.value(x), x.abs(), || format!("x = {x}"));
        let d = xi.derivative(x);
        checks.le_detail("xi slope bound", d.abs(), 1.0, || format!("x = {x}"));
        checks.le_detail("xi convexity", prev, d, || format!("x = {x}"));
        prev = d;
    }
    checks.le("xi total below variation", total, variation);
    Ok(XiReport {
        theta,
        per_piece,
        total,
        variation,
        checks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    /// Breakpoint indices of the interval at the function's resolution.
    pub lo: usize,
    pub hi: usize,
    pub length: f64,
    /// `m_I(f') = |I|^{-1} ∫_I |f'|`.
    pub mean_slope: f64,
    /// `∫_I (f - g)²` for the chord `g`.
    pub residual: f64,
    /// `4 |I|³ m_I(f')²`.
    pub slope_bound: f64,
    /// `∫_I (ξ(f') - ξ(g'))`, nonnegative by convexity.
    pub xi_gap: f64,
    /// `residual / (|I|² (1 + m_I)^{1+θ} xi_gap)`, when the gap is not negligible.
    pub realized_k: Option<f64>,
    pub checks: Checks,
}

/// Compares `f` on `I = [lo 2^{-L}, hi 2^{-L}]` with its chord: the squared
/// residual against `4|I|³ m_I(f')²` (asserted) and against the `ξ` gap (the
/// constant is reported).
pub fn interpolation_bounds(f: &PLFunction, lo: usize, hi: usize, theta: f64) -> Result<InterpolationReport> {
    if !(lo < hi && hi <= f.pieces()) {
        return Err(invalid(format!("interval [{lo}, {hi}] is not inside 0..={}", f.pieces())));
    }
    let xi = Xi::new(theta)?;
    let length = (hi - lo) as f64 * f.step();
    let mean_slope = f.variation_on(lo, hi) / length;
    let mut g = f.clone();
    g.linearize(lo, hi);
    let residual = f.sq_dist_on(&g, lo, hi)?;
    let slope_bound = 4.0 * length.powi(3) * mean_slope * mean_slope;
    let chord = (f.values[hi] - f.values[lo]) / length;
    let xi_f = xi.integral_on(f, lo, hi);
    let xi_gap = xi_f - length * xi.value(chord);
    let mut checks = Checks::new();
    checks.le("interpolation residual bound", residual, slope_bound);
    checks.le("xi gap sign", -xi_gap, 4.0 * f64::EPSILON * xi_f.abs().max(length));
    let realized_k = (xi_gap > 1e-12 * length).then(|| {
        residual / (length * length * (1.0 + mean_slope).powf(1.0 + theta) * xi_gap)
    });
    Ok(InterpolationReport {
        lo,
        hi,
        length,
        mean_slope,
        residual,
        slope_bound,
        xi_gap,
        realized_k,
        checks,
    })
}

/// Exponents of the dyadic selection: `1 < δ < 3/2`, `θ > 0`, `(1+θ)δ < 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub delta: f64,
    pub theta: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            delta: 1.25,
            theta: 0.5,
        }
    }
}

impl SelectionParams {
    pub fn new(delta: f64, theta: f64) -> Result<Self> {
        let p = SelectionParams { delta, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, t) = (self.delta, self.theta);
        if !(d > 1.0 && d < 1.5 && t > 0.0 && (1.0 + t) * d < 2.0) {
            return Err(invalid(format!(
                "selection exponents need 1 < delta < 3/2, theta > 0 and (1+theta) delta < 2, got ({d}, {t})"
            )));
        }
        Ok(())
    }
}

/// Dyadic intervals `I ∈ D_ℓ`, `ℓ ≥ ℓ0`, selected level by level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicFamily {
    pub ell0: u32,
    pub params: SelectionParams,
    /// `levels[d]` lists the indices `i` of `[i 2^{-ℓ}, (i+1) 2^{-ℓ}]`, `ℓ = ℓ0 + d`.
    pub levels: Vec<Vec<u64>>,
    /// `M_ℓ`.
    pub counts: Vec<usize>,
    /// `2^{ℓ - δ(ℓ - ℓ0 - 1)}` per level.
    pub count_bounds: Vec<f64>,
    /// `Σ_ℓ log C(2^ℓ, M_ℓ)`.
    pub log_w: f64,
    /// `Σ_ℓ M_ℓ log(e 2^ℓ / M_ℓ)`.
    pub log_w_crude: f64,
    /// The same sum with `M_ℓ` replaced by `min(2^ℓ, count bound)`, all levels.
    pub log_w_bound: f64,
    /// `log_w_bound / 2^{ℓ0}`.
    pub log_w_constant: f64,
    /// `Σ_ℓ min(2^ℓ, count bound)`.
    pub total_bound: f64,
    pub checks: Checks,
}

impl DyadicFamily {
    /// `(ℓ, i)` for every selected interval.
    pub fn intervals(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .flat_map(move |(d, l)| l.iter().map(move |&i| (self.ell0 + d as u32, i)))
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn ln_binomial(n: f64, k: usize) -> f64 {
    (0..k).map(|i| ((n - i as f64) / (i + 1) as f64).ln()).sum()
}

fn crude_term(level: u32, m: f64) -> f64 {
    if m <= 0.0 {
        0.0
    } else {
        m * (1.0 + f64::from(level) * std::f64::consts::LN_2 - m.ln())
    }
}

/// Breakpoint range of `[i 2^{-ℓ}, (i+1) 2^{-ℓ}]` when `ℓ ≤ L`.
fn breakpoints(f: &PLFunction, level: u32, i: u64) -> Option<(usize, usize)> {
    (level <= f.resolution).then(|| {
        let w = 1usize << (f.resolution - level);
        (i as usize * w, (i as usize + 1) * w)
    })
}

/// `m_I(f')` for a dyadic interval.
fn mean_slope(f: &PLFunction, level: u32, i: u64) -> f64 {
    match breakpoints(f, level, i) {
        Some((lo, hi)) => f.variation_on(lo, hi) * 2f64.powi(level as i32),
        None => f.slope((i >> (level - f.resolution)) as usize).abs(),
    }
}

/// Level `ℓ0` takes the intervals of `D_{ℓ0}` with `m_I(f') ≤ 1`; level `ℓ`
/// takes the intervals of `D_ℓ` outside earlier selections with
/// `m_I(f') ≤ 2^{(ℓ-ℓ0)δ}`. Requires `∫|f'| ≤ 1`.
pub fn dyadic_select(f: &PLFunction, params: SelectionParams, ell0: u32) -> Result<DyadicFamily> {
    params.validate()?;
    if ell0 > MAX_RESOLUTION {
        return Err(invalid(format!("starting level {ell0} exceeds {MAX_RESOLUTION}")));
    }
    let tv = f.total_variation();
    if tv > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!("total variation {tv} exceeds 1")));
    }
    let delta = params.delta;
    let bound_at = |ell: u32| 2f64.powf(f64::from(ell) - delta * (f64::from(ell) - f64::from(ell0) - 1.0));
    let mut checks = Checks::new();
    let mut frontier: Vec<u64> = (0..1u64 << ell0).collect();
    let (mut levels, mut counts, mut count_bounds) = (Vec::new(), Vec::new(), Vec::new());
    let mut covered = 0.0;
    let mut ell = ell0;
    while !frontier.is_empty() {
        if ell > ell0 + 4 * MAX_RESOLUTION + 64 {
            return Err(Error::Numerical("dyadic selection did not terminate".into()));
        }
        let thresh = 2f64.powf(f64::from(ell - ell0) * delta);
        let (take, rest): (Vec<u64>, Vec<u64>) = frontier.into_iter().partition(|&i| mean_slope(f, ell, i) <= thresh);
        for &i in &take {
            checks.le_detail("selection threshold", mean_slope(f, ell, i), thresh, || format!("level {ell} interval {i}"));
        }
        covered += take.len() as f64 * 2f64.powi(-(ell as i32));
        let bound = bound_at(ell);
        if ell > ell0 {
            checks.le_detail("selection count bound", take.len() as f64, bound, || format!("level {ell}"));
        }
        counts.push(take.len());
        count_bounds.push(bound);
        levels.push(take);
        frontier = rest.iter().flat_map(|&i| [2 * i, 2 * i + 1]).collect();
        ell += 1;
    }
    checks.holds("selection cover", covered == 1.0, || format!("covered length {covered}"));

    let log_w: f64 = counts
        .iter()
        .enumerate()
        .map(|(d, &m)| ln_binomial(2f64.powi((ell0 + d as u32) as i32), m))
        .sum();
    let log_w_crude: f64 = counts
        .iter()
        .enumerate()
        .map(|(d, &m)| crude_term(ell0 + d as u32, m as f64))
        .sum();
    let (mut log_w_bound, mut total_bound) = (0.0, 0.0);
    for d in 0..4000u32 {
        let level = ell0 + d;
        let b = 2f64.powi(level as i32).min(bound_at(level));
        let t = crude_term(level, b);
        log_w_bound += t;
        total_bound += b;
        if d > 64 && t < 1e-18 * log_w_bound && b < 1e-18 * total_bound {
            break;
        }
    }
    let tol = |x: f64| x * (1.0 + 1e-12) + 1e-12;
    checks.le("log-count bound", log_w, tol(log_w_crude));
    checks.le("log-count closed form", log_w_crude, tol(log_w_bound));
    Ok(DyadicFamily {
        ell0,
        params,
        levels,
        counts,
        count_bounds,
        log_w,
        log_w_crude,
        log_w_bound,
        log_w_constant: log_w_bound / 2f64.powi(ell0 as i32),
        total_bound,
        checks,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxParams {
    pub r: f64,
    pub k: i32,
    /// `ℓ0` is the largest integer with `2^{ℓ0} ≤ log N / L`.
    pub l: f64,
    pub log_n: f64,
    pub selection: SelectionParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxCase {
    /// Enough interpolation residual to trade distance for a drop of `Ξ`.
    Reduce,
    /// The interpolant at all selected endpoints is already close.
    Interpolate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub case: ApproxCase,
    pub ell0: u32,
    /// `Σ_I d_I` over the whole family.
    pub residual_sum: f64,
    /// `r^{-2(k+2)}`.
    pub threshold: f64,
    /// Intervals linearized.
    pub used: usize,
    /// `‖f - out‖₂`.
    pub distance: f64,
    /// `Ξ(f) - Ξ(out)`.
    pub xi_drop: f64,
    /// `max_I d_I / (2^{-2ℓ0} ∫_I (ξ(f') - ξ(g')))` over intervals with a gap.
    pub interval_constant: f64,
    /// `r^{-2(k+2)} / (2^{-2ℓ0} xi_drop)` in the reduce case.
    pub drop_constant: Option<f64>,
    /// `4 · 2^{-3ℓ0} ≤ r^{-2k} - r^{-2(k+2)}`, which makes the reduced distance at most `r^{-k}`.
    pub overshoot_fits: bool,
    /// Number of selected intervals against `Σ_ℓ min(2^ℓ, count bound)`.
    pub param_count: usize,
    pub param_bound: f64,
    pub checks: Checks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxStep {
    pub function: PLFunction,
    pub family: DyadicFamily,
    pub report: ApproxReport,
}

/// Selects the dyadic family of `f` and either linearizes a subfamily whose
/// residuals just exceed `r^{-2(k+2)}` (reduce) or interpolates `f` at every
/// selected endpoint (interpolate).
pub fn approx_step(f: &PLFunction, params: &ApproxParams) -> Result<ApproxStep> {
    let ApproxParams { r, k, l, log_n, selection } = *params;
    if !(r > 1.0 && l > 0.0 && log_n > 0.0) {
        return Err(invalid("r must exceed 1 and L, log N must be positive"));
    }
    let ratio = log_n / l;
    if ratio < 1.0 {
        return Err(Error::Precondition(format!("log N / L = {ratio} is below 1")));
    }
    let ell0 = ratio.log2().floor() as u32;
    let family = dyadic_select(f, selection, ell0)?;
    let xi = Xi::new(selection.theta)?;
    let delta = selection.delta;
    let mut checks = Checks::new();
    let floor0 = 4.0 * 2f64.powi(-3 * ell0 as i32);

    // (breakpoints, d_I, ξ gap) for intervals resolved by the grid.
    let mut cells: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut interval_constant: f64 = 0.0;
    for (ell, i) in family.intervals() {
        let Some((lo, hi)) = breakpoints(f, ell, i) else { continue };
        let rep = interpolation_bounds(f, lo, hi, selection.theta)?;
        let level_bound = 4.0 * 2f64.powi(-3 * ell as i32) * 2f64.powf(2.0 * f64::from(ell - ell0) * delta);
        checks.le_detail("interval residual bound", rep.residual, level_bound, || format!("level {ell} interval {i}"));
        checks.le_detail("interval residual floor", rep.residual, floor0, || format!("level {ell} interval {i}"));
        if rep.xi_gap > 1e-12 * rep.length {
            interval_constant = interval_constant.max(rep.residual / (2f64.powi(-2 * ell0 as i32) * rep.xi_gap));
        }
        cells.push((lo, hi, rep.residual, rep.xi_gap));
    }
    let residual_sum: f64 = cells.iter().map(|c| c.2).sum();
    let threshold = r.powi(-2 * (k + 2));
    let overshoot_fits = floor0 <= r.powi(-2 * k) - threshold;
    let xi_f = xi.total(f);
    let tv = f.total_variation();

    let (case, out, used, drop_constant) = if residual_sum > threshold {
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| cells[a].2.total_cmp(&cells[b].2).then(a.cmp(&b)));
        let (mut g, mut mass, mut used) = (f.clone(), 0.0, 0);
        for &c in &order {
            if mass > threshold {
                break;
            }
            let (lo, hi, d, _) = cells[c];
            g.linearize(lo, hi);
            mass += d;
            used += 1;
        }
        checks.le("subfamily mass", threshold, mass);
        checks.le("subfamily overshoot", mass, threshold + floor0);
        let dist2 = f.sq_dist_on(&g, 0, f.pieces())?;
        checks.le("reduction residual identity", (dist2 - mass).abs(), 1e-12 * mass.max(f64::MIN_POSITIVE));
        if overshoot_fits {
            checks.le("reduction distance", dist2.sqrt(), r.powi(-k) * (1.0 + 1e-12));
        }
        let drop = xi_f - xi.total(&g);
        checks.holds("xi drop positive", drop > 0.0, || format!("drop {drop}"));
        checks.le("variation preserved", g.total_variation(), tv * (1.0 + 1e-12));
        let kc = threshold / (2f64.powi(-2 * ell0 as i32) * drop);
        (ApproxCase::Reduce, g, used, Some(kc))
    } else {
        let mut h = f.clone();
        for &(lo, hi, _, _) in &cells {
            h.linearize(lo, hi);
        }
        let dist2 = f.sq_dist_on(&h, 0, f.pieces())?;
        checks.le("interpolation distance", dist2, threshold * (1.0 + 1e-9));
        checks.le("parameter count", family.total() as f64, family.total_bound);
        (ApproxCase::Interpolate, h, cells.len(), None)
    };
    let distance = f.l2_dist(&out)?;
    let xi_drop = xi_f - xi.total(&out);
    Ok(ApproxStep {
        report: ApproxReport {
            case,
            ell0,
            residual_sum,
            threshold,
            used,
            distance,
            xi_drop,
            interval_constant,
            drop_constant,
            overshoot_fits,
            param_count: family.total(),
            param_bound: family.total_bound,
            checks,
        },
        function: out,
        family,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gamma12Params {
    pub r: f64,
    /// `θ(n) = scale · (log n)²` for the tree.
    pub growth_scale: f64,
    /// Exponent of `ξ`.
    pub xi_theta: f64,
}

impl Default for Gamma12Params {
    fn default() -> Self {
        Gamma12Params {
            r: 8.0,
            growth_scale: 1.0,
            xi_theta: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gamma12Report {
    pub resolution: u32,
    pub card: usize,
    pub r: f64,
    /// `γ_{1,2}` of the tree measure: an upper bound for the set.
    pub gamma12: f64,
    pub k0: i32,
    pub levels: usize,
    /// `sup φ̂`.
    pub phi_bound: f64,
    /// Largest chain sum divided by `4 sup φ̂`.
    pub chain_sum_ratio: f64,
    pub tree_failures: usize,
}

/// `φ̂_k(f) = min Ξ(g)` over the candidates `g ∈ {∫f, P_0 f, …, P_L f}` with
/// `‖f - g‖₂ ≤ 2 r^{-k}`, an upper bound for the infimum over all `g`.
struct XiLevels {
    /// Per function, `(distance, Ξ)` of each candidate.
    table: Vec<Vec<(f64, f64)>>,
    r: f64,
    bound: f64,
}

impl LevelFunctional for XiLevels {
    fn eval(&self, k: i32, x: usize) -> f64 {
        let radius = 2.0 * self.r.powi(-k);
        self.table[x]
            .iter()
            .filter(|(d, _)| *d <= radius)
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Builds a partition tree of the functions in `L²` driven by `φ̂`, turns it
/// into a measure and evaluates `γ_{1,2}` for that measure exactly.
pub fn gamma12_experiment(fs: &[PLFunction], params: Gamma12Params) -> Result<Gamma12Report> {
    if fs.is_empty() {
        return Err(Error::EmptySet);
    }
    let Gamma12Params { r, growth_scale, xi_theta } = params;
    if !(growth_scale > 0.0) {
        return Err(invalid("growth scale must be positive"));
    }
    let xi = Xi::new(xi_theta)?;
    let res = fs.iter().map(|f| f.resolution).max().unwrap_or(0);
    let fs: Vec<PLFunction> = fs.iter().map(|f| f.refined(res)).collect::<Result<_>>()?;
    let set = PointSet::from_rows(fs.iter().map(|f| f.l2_coords()).collect())?;
    let table: Vec<Vec<(f64, f64)>> = fs
        .iter()
        .map(|f| {
            let mean = f.integral();
            let constant = PLFunction {
                resolution: res,
                values: vec![mean; f.values.len()],
            };
            let mut cands = vec![(f.l2_dist(&constant)?, 0.0)];
            for j in 0..=res {
                let g = f.dyadic_interpolant(j);
                cands.push((f.l2_dist(&g)?, xi.total(&g)));
            }
            Ok(cands)
        })
        .collect::<Result<_>>()?;
    let bound = fs.iter().map(|f| xi.total(f)).fold(0.0, f64::max);
    let phi = XiLevels { table, r, bound };
    let growth = LogPower::new(growth_scale, 2.0);
    let spec = DistanceSpec::L2;
    let tree = build_tree(&set, &spec, &phi, &growth, r, 2.0, TreeOptions::default())?;
    let verdict = verify_tree(&tree, &set, &spec, &phi, &growth)?;
    let (mu, _) = tree_to_measure(&tree, 2.0, 2.0)?;
    let gamma12 = gamma_value(&set, &spec, &mu, GammaParams::new(1.0, 2.0)?)?;
    Ok(Gamma12Report {
        resolution: res,
        card: set.card(),
        r,
        gamma12,
        k0: tree.k0,
        levels: tree.levels.len(),
        phi_bound: bound,
        chain_sum_ratio: if bound > 0.0 { verdict.max_sum / (4.0 * bound) } else { 0.0 },
        tree_failures: verdict.failures.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> PLFunction {
        PLFunction::from_fn(4, |x| 0.5 - (x - 0.5).abs()).unwrap()
    }

    #[test]
    fn xi_closed_form() {
        let xi = Xi::new(1.0).unwrap();
        assert!((xi.value(1.0) - (1.0 - 2f64.ln() / 2.0)).abs() < 1e-15);
        let f = PLFunction::from_fn(0, |x| x).unwrap();
        let rep = xi_functional(&f, 1.0).unwrap();
        assert!((rep.total - 0.653_426_409_720_027_3).abs() < 1e-15);
        assert!(rep.checks.all_passed());
        // θ ≠ 1 agrees with direct integration of ξ'.
        let xi = Xi::new(0.5).unwrap();
        let direct = 2.0 - (3f64.sqrt() - 1.0);
        assert!((xi.value(2.0) - direct).abs() < 1e-14);
        assert_eq!(xi_functional(&PLFunction::zero(3).unwrap(), 0.5).unwrap().total, 0.0);
    }

    #[test]
    fn tent_residual_is_one_twelfth() {
        let rep = interpolation_bounds(&tent(), 0, 16, 0.5).unwrap();
        assert!((rep.residual - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(rep.mean_slope, 1.0);
        assert_eq!(rep.slope_bound, 4.0);
        assert!(rep.checks.all_passed());
    }

    #[test]
    fn linear_function_has_no_residual() {
        let f = PLFunction::from_fn(3, |x| 0.25 * x).unwrap();
        let rep = interpolation_bounds(&f, 2, 6, 0.5).unwrap();
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.realized_k, None);
    }

    #[test]
    fn coordinates_preserve_distance() {
        let f = tent();
        let g = PLFunction::from_fn(4, |x| (x * 7.0).sin() / 20.0).unwrap();
        let (a, b) = (f.l2_coords(), g.l2_coords());
        let e: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((e - f.l2_dist(&g).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn zero_selects_everything_at_once() {
        let fam = dyadic_select(&PLFunction::zero(4).unwrap(), SelectionParams::default(), 2).unwrap();
        assert_eq!(fam.counts, vec![4]);
        assert!(fam.checks.all_passed());
    }

    #[test]
    fn spike_is_deferred() {
        // Rise of 1/2 and fall of 1/2 on [1/2, 1/2 + 2^{-6}].
        let mut v = vec![0.0; 65];
        v[33] = 0.5;
        let f = PLFunction::new(6, v).unwrap();
        let fam = dyadic_select(&f, SelectionParams::default(), 2).unwrap();
        assert_eq!(fam.counts[0], 3);
        assert!(fam.counts.len() > 2);
        assert!(fam.checks.all_passed(), "{:?}", fam.checks.failures().collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_exponents() {
        assert!(SelectionParams::new(1.5, 0.1).is_err());
        assert!(SelectionParams::new(1.25, 0.7).is_err());
        assert!(SelectionParams::new(1.25, 0.5).is_ok());
    }

    #[test]
    fn piecewise_linear_on_coarse_grid_interpolates_to_itself() {
        let f = PLFunction::from_fn(6, |x| 0.25 - (x - 0.25).abs() * 0.5).unwrap().centered();
        let params = ApproxParams {
            r: 8.0,
            k: 1,
            l: 1.0,
            log_n: 4.0,
            selection: SelectionParams::default(),
        };
        let step = approx_step(&f, &params).unwrap();
        assert_eq!(step.report.case, ApproxCase::Interpolate);
        assert_eq!(step.report.distance, 0.0);
        assert!(step.report.checks.all_passed());
    }

    #[test]
    fn spike_triggers_reduction() {
        let mut v = vec![0.0; 257];
        v[100] = 0.5;
        let f = PLFunction::new(8, v).unwrap().centered();
        let params = ApproxParams {
            r: 8.0,
            k: 0,
            l: 1.0,
            log_n: 4.0,
            selection: SelectionParams::default(),
        };
        let step = approx_step(&f, &params).unwrap();
        assert_eq!(step.report.case, ApproxCase::Reduce);
        assert!(step.report.xi_drop > 0.0);
        assert!(step.report.checks.all_passed(), "{:?}", step.report.checks.failures().collect::<Vec<_>>());
    }

    #[test]
    fn single_function_experiment_is_zero() {
        let rep = gamma12_experiment(&[PLFunction::zero(4).unwrap()], Gamma12Params::default()).unwrap();
        assert_eq!(rep.gamma12, 0.0);
    }
}
