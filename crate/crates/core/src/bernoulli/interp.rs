//! The maps `U_k : [0,1] → [0, m^{-k}]^{m^k}` that spread a value over `m^k`
//! blocks, the distances `d_k(x, y) = ‖V_k x - V_k y‖₂` they induce, and Monte
//! Carlo oracles for `F_k(S) = b(V_k S)` that never materialize `V_k`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{estimate_b_ids, stream, BernoulliMode, Estimate, STREAMS};
use crate::metric::PointSet;
use crate::partition::{DistanceFamily, LevelSetFunctional};
use crate::report::Checks;

/// Largest `m^k`; block positions stay exact integers in `f64`.
pub const MAX_WIDTH: u64 = 1 << 52;

/// Largest image dimension [`InterpMap::apply_point`] materializes.
pub const MAX_DENSE: usize = 1_000_000;

/// `U_k` for base `m`: coordinate `ℓ ≤ m^k` of `U_k(x)` is `m^{-k}` when
/// `ℓ m^{-k} ≤ x`, `x - (ℓ-1) m^{-k}` when `x` falls in block `ℓ`, and 0 beyond.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterpMap {
    base: u64,
    level: u32,
}

impl InterpMap {
    pub fn new(base: u64, level: u32) -> Result<Self> {
        if base < 2 {
            return Err(invalid(format!("base must be at least 2, got {base}")));
        }
        match base.checked_pow(level) {
            Some(w) if w <= MAX_WIDTH => Ok(InterpMap { base, level }),
            _ => Err(invalid(format!("{base}^{level} blocks exceed 2^52"))),
        }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `m^k`.
    pub fn width(&self) -> u64 {
        self.base.pow(self.level)
    }

    /// Block length `m^{-k}`.
    pub fn step(&self) -> f64 {
        (self.base as f64).powi(-(self.level as i32))
    }

    /// `f^k_ℓ(x)` for `1 ≤ ℓ ≤ m^k`.
    pub fn coord(&self, ell: u64, x: f64) -> f64 {
        let h = self.step();
        if ell as f64 * h <= x {
            h
        } else if (ell - 1) as f64 * h < x {
            x - (ell - 1) as f64 * h
        } else {
            0.0
        }
    }

    /// Number `L` of full blocks (`ℓ h ≤ x`) and the partial value of block `L + 1`.
    pub fn locate(&self, x: f64) -> (u64, f64) {
        let (w, h) = (self.width(), self.step());
        let mut l = ((x * w as f64).floor().max(0.0) as u64).min(w);
        while l < w && (l + 1) as f64 * h <= x {
            l += 1;
        }
        while l > 0 && l as f64 * h > x {
            l -= 1;
        }
        let frac = if l < w { (x - l as f64 * h).max(0.0) } else { 0.0 };
        (l, frac)
    }

    /// `U_k(x)`.
    pub fn apply(&self, x: f64) -> Result<Vec<f64>> {
        let w = self.width();
        if w as usize > MAX_DENSE {
            return Err(invalid(format!("image of dimension {w} is too large to materialize")));
        }
        check_unit(x)?;
        Ok((1..=w).map(|l| self.coord(l, x)).collect())
    }

    /// `V_k(x)`: `U_k` applied to every coordinate, blocks concatenated.
    pub fn apply_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.width() as usize;
        if x.len().saturating_mul(w) > MAX_DENSE {
            return Err(invalid(format!(
                "image of dimension {} × {w} is too large to materialize",
                x.len()
            )));
        }
        let mut out = Vec::with_capacity(x.len() * w);
        for &v in x {
            out.extend(self.apply(v)?);
        }
        Ok(out)
    }

    /// `‖U_k(x) - U_k(y)‖₂²` in closed form.
    pub fn sq_dist_1d(&self, x: f64, y: f64) -> f64 {
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        let ((lx, fx), (ly, fy)) = (self.locate(x), self.locate(y));
        if lx == ly {
            return (fy - fx).powi(2);
        }
        let h = self.step();
        (h - fx).powi(2) + (ly - lx - 1) as f64 * h * h + fy * fy
    }

    /// `d_k(x, y) = ‖V_k x - V_k y‖₂`.
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| self.sq_dist_1d(*a, *b)).sum::<f64>().sqrt()
    }
}

fn check_unit(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Precondition(format!("value {x} lies outside [0, 1]")));
    }
    Ok(())
}

/// `V_k(x)` for base `m`.
pub fn interp_apply(x: &[f64], k: u32, m: u64) -> Result<Vec<f64>> {
    InterpMap::new(m, k)?.apply_point(x)
}

/// Distances `d_j` and functionals `F_j(S) = b̂(V_j S)` on a set inside `[0,1]^M`.
///
/// Draw `d` of level `j` gives every point `t` the value `Σ_i h_i(t_i)` with
/// `h_i(x) = m^{-j} W_i(L) + ε_{i,L+1}(x - L m^{-j})`, where `W_i` is a
/// Rademacher walk sampled only at the block positions the set needs, through
/// binomial increments. All subsets share these draws, so `F_j` is exactly
/// monotone in the set. Estimates are memoized per level and subset.
pub struct InterpOracle<'a> {
    set: &'a PointSet,
    base: u64,
    n_samples: usize,
    seed: u64,
    levels: Vec<OnceLock<Vec<f64>>>,
    memo: Mutex<HashMap<(usize, Vec<usize>), Estimate>>,
}

impl<'a> InterpOracle<'a> {
    /// Levels `0..=max_level` are available.
    pub fn new(set: &'a PointSet, base: u64, max_level: usize, n_samples: usize, seed: u64) -> Result<Self> {
        InterpMap::new(base, max_level as u32)?;
        if n_samples == 0 {
            return Err(invalid("need at least one sample"));
        }
        for x in set.points() {
            for &v in x {
                check_unit(v)?;
            }
        }
        Ok(InterpOracle {
            set,
            base,
            n_samples,
            seed,
            levels: (0..=max_level).map(|_| OnceLock::new()).collect(),
            memo: Mutex::new(HashMap::new()),
        })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    fn map(&self, j: usize) -> InterpMap {
        assert!(j <= self.max_level(), "level {j} beyond the oracle's range");
        InterpMap {
            base: self.base,
            level: j as u32,
        }
    }

    fn draws(&self, j: usize) -> &[f64] {
        self.levels[j].get_or_init(|| self.sample_level(j))
    }

    fn sample_level(&self, j: usize) -> Vec<f64> {
        let map = self.map(j);
        let (card, dim, h, width) = (self.set.card(), self.set.dim(), map.step(), map.width());
        let locs: Vec<Vec<(u64, f64)>> = (0..dim)
            .map(|w| (0..card).map(|t| map.locate(self.set.point(t)[w])).collect())
            .collect();
        let positions: Vec<Vec<u64>> = locs
            .iter()
            .map(|col| {
                let mut p: Vec<u64> = col
                    .iter()
                    .flat_map(|&(l, _)| [l, (l + 1).min(width)])
                    .collect();
                p.sort_unstable();
                p.dedup();
                p
            })
            .collect();
        let n = self.n_samples;
        let seed = self.seed.wrapping_add((j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let chunks: Vec<Vec<f64>> = (0..STREAMS)
            .into_par_iter()
            .map(|c| {
                let (lo, hi) = (c * n / STREAMS, (c + 1) * n / STREAMS);
                let mut rng = stream(seed, c);
                let mut out = Vec::with_capacity((hi - lo) * card);
                let mut walk: Vec<i64> = Vec::new();
                for _ in lo..hi {
                    let mut g = vec![0.0; card];
                    for w in 0..dim {
                        let pos = &positions[w];
                        walk.clear();
                        let (mut prev, mut val) = (0u64, 0i64);
                        for &q in pos {
                            let gap = q - prev;
                            if gap > 0 {
                                let b = Binomial::new(gap, 0.5).expect("valid binomial").sample(&mut rng);
                                val += 2 * b as i64 - gap as i64;
                            }
                            walk.push(val);
                            prev = q;
                        }
                        for (t, &(l, frac)) in locs[w].iter().enumerate() {
                            let k = pos.binary_search(&l).expect("position recorded");
                            let mut v = h * walk[k] as f64;
                            if frac > 0.0 {
                                v += (walk[k + 1] - walk[k]) as f64 * frac;
                            }
                            g[t] += v;
                        }
                    }
                    out.extend(g);
                }
                out
            })
            .collect();
        chunks.concat()
    }

    /// `F̂_j` of the points `ids`.
    pub fn estimate(&self, j: usize, ids: &[usize]) -> Estimate {
        let mut key = ids.to_vec();
        key.sort_unstable();
        if let Some(e) = self.memo.lock().expect("memo lock").get(&(j, key.clone())) {
            return *e;
        }
        let card = self.set.card();
        let rows = self.draws(j);
        let values: Vec<f64> = rows
            .chunks(card)
            .map(|g| key.iter().map(|&t| g[t]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let e = Estimate::from_samples(&values, self.seed);
        self.memo.lock().expect("memo lock").insert((j, key), e);
        e
    }
}

impl DistanceFamily for InterpOracle<'_> {
    fn dist(&self, j: usize, s: usize, t: usize) -> f64 {
        self.map(j).dist(self.set.point(s), self.set.point(t))
    }
}

impl LevelSetFunctional for InterpOracle<'_> {
    fn value(&self, j: usize, ids: &[usize]) -> f64 {
        self.estimate(j, ids).mean
    }

    fn std_err(&self, j: usize, ids: &[usize]) -> f64 {
        self.estimate(j, ids).std_err
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub base: u64,
    pub b_set: Estimate,
    pub b_image: Estimate,
    /// Both sides enumerated exactly; the comparison then has no tolerance.
    pub exact: bool,
    /// Allowed excess `3 √(se² + se²)`, zero when exact.
    pub margin: f64,
    pub checks: Checks,
}

/// Compares `b̂(V_1 S)` with `b̂(S)` for `S ⊂ [0,1]^M`: the coordinate maps
/// `x ↦ Σ_ℓ ε_ℓ f^1_ℓ(x)` are contractions vanishing at 0, so `b(V_1 S) ≤ b(S)`.
pub fn contraction_check(set: &PointSet, base: u64, n_samples: usize, seed: u64) -> Result<ContractionReport> {
    let map = InterpMap::new(base, 1)?;
    let rows = set
        .points()
        .iter()
        .map(|x| map.apply_point(x))
        .collect::<Result<Vec<_>>>()?;
    let image = PointSet::from_rows(rows)?;
    let b_set = estimate_b_ids(set, &set.ids(), n_samples, seed, BernoulliMode::Auto)?;
    let b_image = estimate_b_ids(&image, &image.ids(), n_samples, seed ^ 0x5bd1_e995, BernoulliMode::Auto)?;
    let exact = b_set.std_err == 0.0 && b_image.std_err == 0.0 && image.dim() <= crate::mc::EXACT_AUTO_DIM;
    let margin = if exact {
        0.0
    } else {
        3.0 * b_set.std_err.hypot(b_image.std_err)
    };
    let mut checks = Checks::new();
    checks.le("contraction comparison", b_image.mean, b_set.mean + margin);
    Ok(ContractionReport {
        base,
        b_set,
        b_image,
        exact,
        margin,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_images() {
        let m = InterpMap::new(3, 2).unwrap();
        assert!(m.apply(0.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(m.apply(1.0).unwrap().iter().all(|&v| v == m.step()));
        assert_eq!(interp_apply(&[0.75], 1, 2).unwrap(), vec![0.5, 0.25]);
    }

    #[test]
    fn closed_form_distance_matches_dense() {
        let m = InterpMap::new(4, 2).unwrap();
        for &(x, y) in &[(0.1, 0.9), (0.3, 0.31), (0.0, 1.0), (0.5, 0.5), (0.0625, 0.125), (0.7, 0.2)] {
            let (a, b) = (m.apply(x).unwrap(), m.apply(y).unwrap());
            let dense: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum();
            assert!((dense - m.sq_dist_1d(x, y)).abs() < 1e-15, "{x} {y}");
        }
    }

    #[test]
    fn at_most_one_partial_block() {
        let m = InterpMap::new(5, 2).unwrap();
        for i in 0..=100 {
            let img = m.apply(i as f64 / 100.0).unwrap();
            let partial = img.iter().filter(|&&v| v > 0.0 && v < m.step()).count();
            assert!(partial <= 1);
        }
    }

    #[test]
    fn level_zero_is_the_rademacher_mean() {
        let s = PointSet::from_rows(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let o = InterpOracle::new(&s, 4, 2, 4000, 3).unwrap();
        let e = o.estimate(0, &[0, 1]);
        assert!(e.agrees(0.5, 4.0), "{e:?}");
        // Shared draws make F monotone in the set.
        assert!(o.value(1, &[1]) <= o.value(1, &[0, 1]));
    }

    #[test]
    fn contraction_on_small_sets() {
        let single = PointSet::from_rows(vec![vec![0.4, 0.2]]).unwrap();
        let r = contraction_check(&single, 2, 100, 1).unwrap();
        assert!(r.b_set.mean.abs() < 1e-15);
        assert!(r.b_image.mean.abs() < 1e-15);
        // S = {0, e_1}: b(S) = 1/2, b(U_1 S) = E(Σ ε_ℓ)^+ / m.
        let s = PointSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
        let r = contraction_check(&s, 4, 100, 1).unwrap();
        assert!(r.exact);
        assert_eq!(r.b_set.mean, 0.5);
        // Σ of four signs is ±4 w.p. 1/16 each, ±2 w.p. 1/4 each: E(·)^+ = 3/4.
        assert_eq!(r.b_image.mean, 0.75 / 4.0);
        assert!(r.checks.all_passed());
    }
}
