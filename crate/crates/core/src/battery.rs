//! The acceptance battery: ten criteria, each run over a seeded family of
//! instances and summarized by pass/fail plus the realized constants.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bernoulli::{
    contraction_check, pseq_build, split_into_l1, split_into_weak_lp, weak_lp_pipeline, ChainMaps, WeakLpParams,
};
use crate::chain::PartitionChain;
use crate::convex::{convex_pipeline, ellipsoid_lattice, ConvexInstance, ConvexityCert};
use crate::error::{invalid, Result};
use crate::function_class::{
    dyadic_select, gamma12_experiment, interpolation_bounds, Gamma12Params, PLFunction, SelectionParams,
};
use crate::gauge::GaugeOracle;
use crate::mc::{estimate_b, estimate_g, mmt_pipeline, subset_extract, BernoulliMode, VectorFamily};
use crate::measure::DiscreteMeasure;
use crate::metric::{DistanceSpec, PointSet};
use crate::partition::{build_tree, tree_to_measure, verify_tree, LogPower, SyntheticPhi, TreeOptions};
use crate::report::Checks;

/// Instance sizes: `Full` is the acceptance battery, `Smoke` a seconds-long
/// miniature with the same structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Smoke,
}

impl Scale {
    fn pick<T>(self, full: T, smoke: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Smoke => smoke,
        }
    }
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "tree bounds on synthetic functionals"),
    (2, "measure constant across r"),
    (3, "monte carlo pins"),
    (4, "two-sided majorizing measure comparison"),
    (5, "convex body pipeline"),
    (6, "split constructions"),
    (7, "weak-lp decomposition pipeline"),
    (8, "contraction comparison"),
    (9, "function class bounds"),
    (10, "subset extraction"),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    /// Realized constants, aggregated over the instances.
    pub constants: BTreeMap<String, f64>,
    /// Violated checks, `instance: check (lhs > rhs)`.
    pub failures: Vec<String>,
}

struct Tally {
    instances: usize,
    constants: BTreeMap<String, f64>,
    failures: Vec<String>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            instances: 0,
            constants: BTreeMap::new(),
            failures: Vec::new(),
        }
    }

    fn max(&mut self, key: &str, v: f64) {
        let e = self.constants.entry(key.to_string()).or_insert(f64::NEG_INFINITY);
        *e = e.max(v);
    }

    fn min(&mut self, key: &str, v: f64) {
        let e = self.constants.entry(key.to_string()).or_insert(f64::INFINITY);
        *e = e.min(v);
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn checks(&mut self, label: &str, checks: &Checks) {
        for c in checks.failures() {
            self.failures.push(format!("{label}: {} ({} > {}) {}", c.name, c.lhs, c.rhs, c.detail));
        }
    }

    fn finish(self, id: u8) -> CriterionReport {
        CriterionReport {
            id,
            name: CRITERIA[usize::from(id) - 1].1.to_string(),
            passed: self.failures.is_empty(),
            instances: self.instances,
            constants: self.constants,
            failures: self.failures,
        }
    }
}

/// Both vanish, or the larger is at most 1.5 times the smaller.
pub fn seed_stable(a: f64, b: f64) -> bool {
    (a == 0.0 && b == 0.0) || (a > 0.0 && b > 0.0 && a.max(b) <= 1.5 * a.min(b))
}

fn rng_for(seed: u64, id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (u64::from(id) << 56))
}

/// Uniform points in the Euclidean ball of the given radius.
pub fn ball_cloud(rng: &mut impl Rng, dim: usize, card: usize, radius: f64) -> Result<PointSet> {
    let rows = (0..card)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let rad = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            g.iter().map(|v| v * rad / norm).collect()
        })
        .collect();
    PointSet::new(dim, rows)
}

/// Uniform points in `[-half, half]^dim`.
pub fn cube_cloud(rng: &mut impl Rng, dim: usize, card: usize, half: f64) -> Result<PointSet> {
    let rows = (0..card)
        .map(|_| (0..dim).map(|_| rng.random_range(-half..=half)).collect())
        .collect();
    PointSet::new(dim, rows)
}

pub fn basis(n: usize) -> Result<PointSet> {
    PointSet::from_rows((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
}

/// Centered hats and sines of total variation at most 1, with their negatives.
pub fn function_battery(resolution: u32) -> Result<Vec<PLFunction>> {
    let mut fs = Vec::new();
    for &(c, w) in &[(0.5, 0.25), (0.3, 0.1), (0.7, 0.05), (0.37, 0.13), (0.61, 0.021)] {
        let f = PLFunction::from_fn(resolution, |x: f64| (0.5 - 0.5 * (x - c).abs() / w).max(0.0))?.centered();
        fs.push(f.clone());
        fs.push(f.scaled(-1.0));
    }
    for m in 1..=6 {
        let m = f64::from(m);
        let f = PLFunction::from_fn(resolution, |x: f64| (2.0 * PI * m * x).sin() / (4.0 * m))?.centered();
        fs.push(f.clone());
        fs.push(f.scaled(-1.0));
    }
    Ok(fs
        .into_iter()
        .map(|f| {
            let tv = f.total_variation();
            if tv > 1.0 {
                f.scaled(1.0 / tv)
            } else {
                f
            }
        })
        .collect())
}

/// Random piecewise linear function of variation at most 1.
pub fn random_pl(rng: &mut impl Rng, resolution: u32) -> Result<PLFunction> {
    let n = (1usize << resolution) + 1;
    let mut v = vec![0.0; n];
    for k in 1..n {
        v[k] = v[k - 1] + rng.random_range(-1.0..1.0) * rng.random::<f64>().powi(3);
    }
    let f = PLFunction::new(resolution, v)?;
    let tv = f.total_variation();
    Ok(if tv > 1.0 { f.scaled(1.0 / tv) } else { f })
}

/// Distinct points only: the synthetic functional needs them.
fn distinct(set: &PointSet) -> bool {
    let n = set.card();
    (0..n).all(|a| (a + 1..n).all(|b| DistanceSpec::L2.between(set, a, b) > 1e-9))
}

fn synthetic_battery(rng: &mut ChaCha8Rng, scale: Scale) -> Result<Vec<PointSet>> {
    let count = scale.pick(50, 6);
    let max_card = scale.pick(256, 32);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let dim = rng.random_range(1..=16);
        let card = rng.random_range(2..=max_card);
        let set = if rng.random::<bool>() {
            let radius = rng.random_range(0.1..4.0);
            ball_cloud(rng, dim, card, radius)?
        } else {
            let half = rng.random_range(0.1..2.0);
            cube_cloud(rng, dim, card, half)?
        };
        if distinct(&set) {
            out.push(set);
        }
    }
    Ok(out)
}

fn criterion_trees(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 1);
    let theta = LogPower::sqrt_log(4.0);
    for (n, set) in synthetic_battery(&mut rng, scale)?.iter().enumerate() {
        let r = [4.0, 8.0, 16.0][n % 3];
        let phi = SyntheticPhi::build(set, &DistanceSpec::L2, r, 1.0, &theta, None)?;
        let tree = build_tree(set, &DistanceSpec::L2, &phi, &theta, r, 1.0, TreeOptions::with_k0(phi.k0()))?;
        let rep = verify_tree(&tree, set, &DistanceSpec::L2, &phi, &theta)?;
        for f in &rep.failures {
            t.failures.push(format!("instance {n}: {} at level {} cell {}: {}", f.check, f.level, f.cell, f.detail));
        }
        t.require(rep.max_sum <= rep.bound, || format!("instance {n}: chain-sum bound {} > {}", rep.max_sum, rep.bound));
        if rep.bound > 0.0 {
            t.max("chain_sum_over_bound", rep.max_sum / rep.bound);
        }
        t.instances += 1;
    }
    Ok(t.finish(1))
}

fn criterion_measure(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 1);
    let theta = LogPower::sqrt_log(4.0);
    for (n, set) in synthetic_battery(&mut rng, scale)?.iter().enumerate() {
        for r in [4.0, 8.0, 16.0] {
            let phi = SyntheticPhi::build(set, &DistanceSpec::L2, r, 1.0, &theta, None)?;
            let tree = build_tree(set, &DistanceSpec::L2, &phi, &theta, r, 1.0, TreeOptions::with_k0(phi.k0()))?;
            let (_, rep) = tree_to_measure(&tree, 0.5, 1.0)?;
            t.require(rep.ratio <= 64.0, || format!("instance {n}, r = {r}: measure constant {} > 64", rep.ratio));
            t.require(rep.level_weights_ok(), || format!("instance {n}, r = {r}: level weight sums"));
            t.max(&format!("measure_ratio_r{r}"), rep.ratio);
            t.max("explicit_constant", rep.constant);
            t.instances += 1;
        }
    }
    Ok(t.finish(2))
}

fn criterion_pins(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 3);
    let target = 1.0 / PI.sqrt();
    let g = estimate_g(&basis(2)?, scale.pick(100_000, 20_000), seed)?;
    t.require(g.agrees(target, 3.0), || format!("E max(g1, g2) = {} ± {} vs {target}", g.mean, g.std_err));
    t.constants.insert("g_two_points".into(), g.mean);
    t.constants.insert("g_two_points_se".into(), g.std_err);
    t.instances += 1;
    for n in 0..scale.pick(20, 4) {
        let dim = rng.random_range(1..=16);
        let card = rng.random_range(1..=24);
        let set = cube_cloud(&mut rng, dim, card, 1.0)?;
        let exact = estimate_b(&set, 1, 0, BernoulliMode::Exact)?;
        let mc = estimate_b(&set, 20_000, seed.wrapping_add(n), BernoulliMode::MonteCarlo)?;
        t.require(mc.agrees(exact.mean, 4.0), || {
            format!("set {n}: exact {} vs sampled {} ± {}", exact.mean, mc.mean, mc.std_err)
        });
        if mc.std_err > 0.0 {
            t.max("max_deviation_in_se", (mc.mean - exact.mean).abs() / mc.std_err);
        }
        t.instances += 1;
    }
    Ok(t.finish(3))
}

fn criterion_mmt(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 4);
    let mut sets = Vec::new();
    for n in scale.pick(vec![4, 16, 64], vec![4]) {
        sets.push(basis(n)?);
    }
    while sets.len() < scale.pick(20, 3) {
        let card = rng.random_range(8..=scale.pick(64, 16));
        sets.push(ball_cloud(&mut rng, 8, card, 1.0)?);
    }
    let n_samples = scale.pick(4000, 1000);
    for (n, set) in sets.iter().enumerate() {
        let mut ratios = Vec::new();
        for s in [seed, seed.wrapping_add(1_000_003)] {
            let rep = mmt_pipeline(set, 4.0, n_samples, 4.0, s)?.report;
            let ratio = rep.gamma_over_g.unwrap_or(f64::NAN);
            t.require((1.0..=200.0).contains(&ratio), || {
                format!("instance {n}, seed {s}: gamma / G = {ratio} outside [1, 200]")
            });
            t.max("gamma_over_g_max", ratio);
            t.min("gamma_over_g_min", ratio);
            ratios.push(ratio);
        }
        t.require(seed_stable(ratios[0], ratios[1]), || {
            format!("instance {n}: gamma / G unstable across seeds ({} vs {})", ratios[0], ratios[1])
        });
        t.max("seed_spread", ratios[0].max(ratios[1]) / ratios[0].min(ratios[1]));
        t.instances += 1;
    }
    Ok(t.finish(4))
}

fn criterion_convex(_seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let dims = scale.pick(11, 4);
    let axes: Vec<f64> = (0..dims).map(|i| 2f64.powf(-(i as f64) / 2.0)).collect();
    let b = GaugeOracle::Ellipsoid { semiaxes: axes.clone() };
    let u = GaugeOracle::euclidean(dims);
    let mut ratios = Vec::new();
    for budget in scale.pick([10_000, 20_000], [300, 600]) {
        let (pts, mesh) = ellipsoid_lattice(&axes, budget)?;
        let res = convex_pipeline(&ConvexInstance {
            points: &pts,
            b: &b,
            u: &u,
            cert: ConvexityCert::for_ellipsoid(&axes)?,
            alpha: 0.5,
            beta: 2.0,
            r: 8.0,
        })?;
        let rep = &res.report;
        let label = format!("budget {budget}");
        t.checks(&label, &rep.checks);
        for f in &rep.tree.failures {
            t.failures.push(format!("{label}: {} at level {}: {}", f.check, f.level, f.detail));
        }
        let ratio = rep.ratio.unwrap_or(f64::NAN);
        t.require(ratio <= 500.0, || format!("{label}: gamma / entropy = {ratio} > 500"));
        t.constants.insert(format!("ratio_{budget}"), ratio);
        t.constants.insert(format!("mesh_{budget}"), mesh);
        t.constants.insert(format!("card_{budget}"), pts.card() as f64);
        t.max("packing_sum_over_bound", rep.packing_sum / rep.packing_bound);
        ratios.push(ratio);
        t.instances += 1;
    }
    t.require(seed_stable(ratios[0], ratios[1]), || {
        format!("ratio not mesh-stable ({} vs {})", ratios[0], ratios[1])
    });
    Ok(t.finish(5))
}

fn criterion_splits(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 6);
    for n in 0..scale.pick(30, 4) {
        let dim = rng.random_range(1..=12);
        let card = rng.random_range(2..=48);
        let r: f64 = [4.0, 8.0][n % 2];
        let i = (n / 2 % 2) as i32;
        let set = cube_cloud(&mut rng, dim, card, r.powi(-i) / 4.0)?;
        // Cells where about half the coordinates may differ by more than r^{-j}.
        let rad = (dim as f64 / 2.0).max(0.5);
        let chain = PartitionChain::greedy_balls(&set, i, |j| (DistanceSpec::TruncPhi { j, r }, rad))?;
        let maps = if n % 3 == 0 { ChainMaps::lowest(chain) } else { ChainMaps::consistent(chain) };
        let mu = DiscreteMeasure::uniform(&set.ids())?;
        let (_, rep) = split_into_l1(&set, &maps, &mu, r, i)?;
        t.checks(&format!("l1 split {n}"), &rep.checks);
        if rep.theta > 0.0 {
            t.max("l1_remainder_over_theta", rep.l1_max / rep.theta);
        }

        let p = [1.25, 1.5][n % 2];
        let set = cube_cloud(&mut rng, dim, card, 0.25)?;
        let chain = PartitionChain::greedy_balls(&set, 0, |j| (DistanceSpec::L2, r.powi(-j) / 2.0))?;
        let maps = ChainMaps::consistent(chain);
        let (_, rep) = split_into_weak_lp(&set, &maps, &mu, r, p, 1.0)?;
        t.checks(&format!("weak split {n}"), &rep.checks);
        t.max("weak_remainder_over_bound", rep.weak_max / rep.k_weak);
        t.instances += 2;
    }
    for n in 0..scale.pick(100, 10) {
        let len = rng.random_range(1..=64);
        let raw: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0) * rng.random::<f64>().powi(4)).collect();
        let l1: f64 = raw.iter().map(|v| v.abs()).sum();
        let y: Vec<f64> = raw.iter().map(|v| v / l1.max(1.0)).collect();
        let r = [4.0, 8.0, 16.0][n % 3];
        let (_, rep) = pseq_build(&y, r)?;
        t.checks(&format!("profile sequence {n}"), &rep.checks);
        t.max("profile_sum_over_constant", rep.sum / rep.k_r);
        t.instances += 1;
    }
    Ok(t.finish(6))
}

/// Sparse nonnegative cloud: each coordinate is nonzero with the given probability.
fn sparse_cloud(rng: &mut impl Rng, dim: usize, card: usize, density: f64) -> Result<PointSet> {
    let rows = (0..card)
        .map(|_| {
            (0..dim)
                .map(|_| if rng.random::<f64>() < density { rng.random::<f64>() } else { 0.0 })
                .collect()
        })
        .collect();
    PointSet::new(dim, rows)
}

fn criterion_weak_lp(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 7);
    for n in 0..scale.pick(10, 2) {
        let dim = rng.random_range(2..=scale.pick(64, 16));
        let card = rng.random_range(2..=scale.pick(64, 16));
        let set = match n % 3 {
            0 => sparse_cloud(&mut rng, dim, card, 0.2)?,
            1 => cube_cloud(&mut rng, dim, card, 1.0)?,
            _ => ball_cloud(&mut rng, dim, card, 1.0)?,
        };
        let mut pairs = Vec::new();
        for s in [seed, seed.wrapping_add(7_919)] {
            let mut params = WeakLpParams::new(1.5, 4.0);
            params.seed = s;
            params.n_samples = scale.pick(1000, 300);
            let rep = weak_lp_pipeline(&set, &params)?.report;
            t.checks(&format!("instance {n}, seed {s}"), &rep.checks);
            t.require(rep.c_ratio <= 1e3, || format!("instance {n}: c / b = {}", rep.c_ratio));
            t.require(rep.gamma_ratio <= 1e3, || format!("instance {n}: gamma / b = {}", rep.gamma_ratio));
            t.max("c_over_b", rep.c_ratio);
            t.max("gamma_over_b", rep.gamma_ratio);
            pairs.push((rep.c_ratio, rep.gamma_ratio));
        }
        let (a, b) = (pairs[0], pairs[1]);
        t.require(seed_stable(a.0, b.0), || format!("instance {n}: c / b unstable ({} vs {})", a.0, b.0));
        t.require(seed_stable(a.1, b.1), || format!("instance {n}: gamma / b unstable ({} vs {})", a.1, b.1));
        t.instances += 1;
    }
    Ok(t.finish(7))
}

fn criterion_contraction(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 8);
    let count = scale.pick(10, 3);
    let mut saw_exact = false;
    for n in 0..count {
        // The first instance is small enough to enumerate both sides.
        let (dim, base) = if n == 0 { (2, 4) } else { (rng.random_range(1..=16), [2, 4, 16][n % 3]) };
        let card = rng.random_range(1..=16);
        let rows = (0..card).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
        let set = PointSet::new(dim, rows)?;
        let rep = contraction_check(&set, base, scale.pick(20_000, 2_000), seed.wrapping_add(n as u64))?;
        t.checks(&format!("instance {n}"), &rep.checks);
        if n == 0 {
            t.require(rep.exact && rep.margin == 0.0, || "first instance is not exact".into());
        }
        saw_exact |= rep.exact;
        if rep.b_set.mean > 0.0 {
            t.max("image_over_set", rep.b_image.mean / rep.b_set.mean);
        }
        t.instances += 1;
    }
    t.require(saw_exact, || "no exact instance".into());
    Ok(t.finish(8))
}

fn criterion_function_class(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let mut rng = rng_for(seed, 9);
    let params = SelectionParams::default();
    for n in 0..scale.pick(100, 10) {
        let res = rng.random_range(2..=10);
        let f = random_pl(&mut rng, res)?;
        let pieces = f.pieces();
        for _ in 0..4 {
            let lo = rng.random_range(0..pieces);
            let hi = rng.random_range(lo + 1..=pieces);
            let rep = interpolation_bounds(&f, lo, hi, params.theta)?;
            t.checks(&format!("function {n} on [{lo}, {hi}]"), &rep.checks);
            if rep.slope_bound > 0.0 {
                t.max("residual_over_bound", rep.residual / rep.slope_bound);
            }
        }
        let fam = dyadic_select(&f, params, rng.random_range(0..4))?;
        t.checks(&format!("function {n} selection"), &fam.checks);
        t.instances += 1;
    }
    let (lo, hi) = scale.pick((8, 10), (4, 5));
    let run = |l| gamma12_experiment(&function_battery(l)?, Gamma12Params { r: 8.0, ..Default::default() });
    let (a, b) = (run(lo)?.gamma12, run(hi)?.gamma12);
    t.constants.insert(format!("gamma12_at_{lo}"), a);
    t.constants.insert(format!("gamma12_at_{hi}"), b);
    let growth = if a > 0.0 { b / a - 1.0 } else { 0.0 };
    t.constants.insert("gamma12_growth".into(), growth);
    t.require(b <= 1.25 * a, || format!("gamma12 grows by {:.1}% from {lo} to {hi}", 100.0 * growth));
    Ok(t.finish(9))
}

fn criterion_extraction(seed: u64, scale: Scale) -> Result<CriterionReport> {
    let mut t = Tally::new();
    let (n, m) = scale.pick((8, 512), (4, 64));
    for s in 0..scale.pick(5u64, 2) {
        let mut rng = rng_for(seed.wrapping_add(s), 10);
        let vectors: Vec<Vec<f64>> = (0..m)
            .map(|k| {
                // Mixed scales: a few large vectors among many small ones.
                let amp = if k % 16 == 0 { 1.0 } else { 0.1 };
                (0..n).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect()
            })
            .collect();
        let fam = VectorFamily::new(vectors, GaugeOracle::Cube { dim: n })?;
        let (keep, rep) = subset_extract(&fam, 8.0, 50.0, scale.pick(2000, 300), seed.wrapping_add(s))?;
        t.require(keep.len() <= rep.budget, || format!("seed {s}: kept {} > {}", keep.len(), rep.budget));
        t.require(rep.disjunction, || {
            format!("seed {s}: tail mean not halved and K = {} > 50", rep.realized_k)
        });
        t.checks(&format!("seed {s}"), &rep.checks);
        t.max("realized_k", rep.realized_k);
        t.max("kept", keep.len() as f64);
        t.instances += 1;
    }
    Ok(t.finish(10))
}

pub fn run_criterion(id: u8, seed: u64, scale: Scale) -> Result<CriterionReport> {
    match id {
        1 => criterion_trees(seed, scale),
        2 => criterion_measure(seed, scale),
        3 => criterion_pins(seed, scale),
        4 => criterion_mmt(seed, scale),
        5 => criterion_convex(seed, scale),
        6 => criterion_splits(seed, scale),
        7 => criterion_weak_lp(seed, scale),
        8 => criterion_contraction(seed, scale),
        9 => criterion_function_class(seed, scale),
        10 => criterion_extraction(seed, scale),
        _ => Err(invalid(format!("no acceptance criterion {id}"))),
    }
}
