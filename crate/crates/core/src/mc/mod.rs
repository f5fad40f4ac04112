//! Monte Carlo oracles for Gaussian, Rademacher and canonical process suprema.
//!
//! Every estimator splits its draws over [`STREAMS`] fixed ChaCha substreams of
//! the master seed and reduces per-draw values in draw order, so results are
//! bit-identical for a given seed whatever the number of worker threads.

mod bank;
mod compare;
mod extract;
mod group;
mod interp;
mod mmt;

pub use bank::{Projections, SampleBank};
pub use compare::{check_comparisons, growth_check, ComparisonReport, GrowthReport, Interpolation};
pub use extract::{ell_gauss, hull_constant, subset_extract, ExtractReport, VectorFamily};
pub use group::{group_check, GroupReport, GroupTable};
pub use interp::{dyadic_partitions, estimate_alpha, interp_measure, InterpReport};
pub use mmt::{mmt_pipeline, MmtReport, MmtResult};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metric::PointSet;

/// Number of independent substreams per estimate.
pub const STREAMS: usize = 64;

/// Largest dimension accepted by exact sign enumeration.
pub const EXACT_MAX_DIM: usize = 24;

/// Dimension up to which [`BernoulliMode::Auto`] enumerates.
pub const EXACT_AUTO_DIM: usize = 20;

/// A Monte Carlo (or exact) mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64, n_samples: usize) -> Self {
        Estimate {
            mean: value,
            std_err: 0.0,
            n_samples,
            seed: 0,
        }
    }

    /// Mean and `sample-std / √n` with compensated sums.
    pub fn from_samples(values: &[f64], seed: u64) -> Self {
        let n = values.len();
        let mean = kahan(values.iter().copied()) / n as f64;
        let var = if n > 1 {
            kahan(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            std_err: (var / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }

    /// `|mean - target| ≤ k · std_err`.
    pub fn agrees(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

pub(crate) fn kahan(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub(crate) fn stream(seed: u64, s: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// Evaluates `n` independent draws; draw `d` of substream `c` covers the
/// contiguous index block of that substream.
pub(crate) fn draws<F>(n: usize, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>) -> f64 + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..STREAMS)
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = (c * n / STREAMS, (c + 1) * n / STREAMS);
            let mut rng = stream(seed, c);
            let mut buf = Vec::new();
            (lo..hi).map(|_| f(&mut rng, &mut buf)).collect()
        })
        .collect();
    chunks.concat()
}

/// Inverse-CDF sampler for the density `a_τ exp(-|t|^τ)`, tabulated on
/// `2^16` grid points and interpolated linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct TauSampler {
    tau: f64,
    tmax: f64,
    cdf: Vec<f64>,
    a_tau: f64,
}

impl TauSampler {
    pub const GRID: usize = 1 << 16;

    pub fn new(tau: f64) -> Result<Self> {
        if !(tau >= 1.0 && tau.is_finite()) {
            return Err(invalid(format!("canonical process needs tau >= 1, got {tau}")));
        }
        // e^{-50} relative tail mass is far below double precision of the CDF.
        let tmax = 50f64.powf(1.0 / tau);
        let h = tmax / Self::GRID as f64;
        let dens = |i: usize| (-(i as f64 * h).powf(tau)).exp();
        let mut cdf = Vec::with_capacity(Self::GRID + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..Self::GRID {
            acc += 0.5 * h * (dens(i) + dens(i + 1));
            cdf.push(acc);
        }
        Ok(TauSampler {
            tau,
            tmax,
            a_tau: 1.0 / (2.0 * acc),
            cdf,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Normalizing constant of the density on the whole line.
    pub fn a_tau(&self) -> f64 {
        self.a_tau
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = *self.cdf.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, Self::GRID) - 1;
        let (c0, c1) = (self.cdf[j], self.cdf[j + 1]);
        let h = self.tmax / Self::GRID as f64;
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        let x = (j as f64 + frac) * h;
        if rng.random::<bool>() {
            x
        } else {
            -x
        }
    }
}

/// Distribution of the independent coordinates of a canonical process.
#[derive(Clone, Debug, PartialEq)]
pub enum Noise {
    Gaussian,
    Rademacher,
    Canonical(TauSampler),
}

impl Noise {
    pub fn fill<R: Rng>(&self, rng: &mut R, buf: &mut [f64]) {
        match self {
            Noise::Gaussian => buf.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            Noise::Rademacher => buf
                .iter_mut()
                .for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
            Noise::Canonical(s) => buf.iter_mut().for_each(|v| *v = s.sample(rng)),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("need at least one sample"));
    }
    Ok(())
}

/// Per-draw values of `max_{t ∈ ids} Σ_i t_i h_i`.
pub fn sup_draws(set: &PointSet, ids: &[usize], noise: &Noise, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_samples(n)?;
    if ids.is_empty() {
        return Err(Error::EmptySet);
    }
    let dim = set.dim();
    Ok(draws(n, seed, |rng, buf| {
        buf.resize(dim, 0.0);
        noise.fill(rng, buf);
        ids.iter()
            .map(|&t| dot(set.point(t), buf))
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// `E max_{t ∈ ids} Σ_i t_i h_i` by Monte Carlo.
pub fn sup_estimate(set: &PointSet, ids: &[usize], noise: &Noise, n: usize, seed: u64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&sup_draws(set, ids, noise, n, seed)?, seed))
}

/// `Ĝ(T) = Ê max_t Σ t_i g_i`.
pub fn estimate_g(set: &PointSet, n_samples: usize, seed: u64) -> Result<Estimate> {
    sup_estimate(set, &set.ids(), &Noise::Gaussian, n_samples, seed)
}

/// How [`estimate_b`] evaluates the Rademacher mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BernoulliMode {
    /// Exact for dimension ≤ 20, Monte Carlo above.
    #[default]
    Auto,
    MonteCarlo,
    Exact,
}

/// `b̂(T) = Ê max_t Σ ε_i t_i`.
pub fn estimate_b(set: &PointSet, n_samples: usize, seed: u64, mode: BernoulliMode) -> Result<Estimate> {
    estimate_b_ids(set, &set.ids(), n_samples, seed, mode)
}

pub fn estimate_b_ids(
    set: &PointSet,
    ids: &[usize],
    n_samples: usize,
    seed: u64,
    mode: BernoulliMode,
) -> Result<Estimate> {
    let dim = set.dim();
    let exact = match mode {
        BernoulliMode::Exact => {
            if dim > EXACT_MAX_DIM {
                return Err(invalid(format!(
                    "exact sign enumeration refused for dimension {dim} > {EXACT_MAX_DIM}"
                )));
            }
            true
        }
        BernoulliMode::Auto => dim <= EXACT_AUTO_DIM,
        BernoulliMode::MonteCarlo => false,
    };
    if exact {
        if ids.is_empty() {
            return Err(Error::EmptySet);
        }
        Ok(Estimate::exact(exact_rademacher(set, ids), 1usize << dim))
    } else {
        sup_estimate(set, ids, &Noise::Rademacher, n_samples, seed)
    }
}

/// Mean of `max_t Σ ε_i t_i` over all `2^M` sign patterns, walking a Gray
/// code inside each of [`STREAMS`] blocks.
fn exact_rademacher(set: &PointSet, ids: &[usize]) -> f64 {
    let dim = set.dim();
    let total: u64 = 1 << dim;
    let blocks = (STREAMS as u64).min(total);
    let sums: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let (lo, hi) = (b * total / blocks, (b + 1) * total / blocks);
            let gray = |m: u64| m ^ (m >> 1);
            let sign = |g: u64, i: usize| if g >> i & 1 == 1 { -1.0 } else { 1.0 };
            let g0 = gray(lo);
            let mut dots: Vec<f64> = ids
                .iter()
                .map(|&t| set.point(t).iter().enumerate().map(|(i, v)| sign(g0, i) * v).sum())
                .collect();
            let mut vals = Vec::with_capacity((hi - lo) as usize);
            vals.push(dots.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            for m in lo + 1..hi {
                let g = gray(m);
                let i = (g ^ gray(m - 1)).trailing_zeros() as usize;
                let s = sign(g, i);
                for (d, &t) in dots.iter_mut().zip(ids) {
                    *d += 2.0 * s * set.point(t)[i];
                }
                vals.push(dots.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            kahan(vals.into_iter())
        })
        .collect();
    kahan(sums.into_iter()) / total as f64
}

/// `F̂_τ(T) = Ê max_t Σ t_i h_i` with `h_i` of density `a_τ e^{-|t|^τ}`.
pub fn estimate_f_tau(set: &PointSet, tau: f64, n_samples: usize, seed: u64) -> Result<Estimate> {
    let noise = Noise::Canonical(TauSampler::new(tau)?);
    sup_estimate(set, &set.ids(), &noise, n_samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: Vec<Vec<f64>>) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    #[test]
    fn rademacher_enumeration_pins() {
        let e = |rows| estimate_b(&pts(rows), 1, 0, BernoulliMode::Exact).unwrap().mean;
        assert_eq!(e(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]), 1.0);
        assert_eq!(e(vec![vec![1.0, 1.0], vec![1.0, -1.0]]), 1.0);
        assert_eq!(e(vec![vec![1.0, 0.0], vec![0.0, 1.0]]), 0.5);
    }

    #[test]
    fn exact_refused_above_limit() {
        let s = pts(vec![vec![0.0; 25]]);
        assert!(estimate_b(&s, 10, 0, BernoulliMode::Exact).is_err());
    }

    #[test]
    fn singleton_gaussian_is_centered() {
        let e = estimate_g(&pts(vec![vec![0.3, -0.2]]), 20_000, 7).unwrap();
        assert!(e.agrees(0.0, 4.0), "{e:?}");
    }

    #[test]
    fn tau_two_has_variance_one_half() {
        let s = TauSampler::new(2.0).unwrap();
        let mut rng = stream(3, 0);
        let n = 200_000;
        let v: f64 = (0..n).map(|_| s.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 0.5).abs() < 0.01, "{v}");
        assert!((s.a_tau() - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6);
        let s1 = TauSampler::new(1.0).unwrap();
        assert!((s1.a_tau() - 0.5).abs() < 1e-6);
        assert!(TauSampler::new(0.5).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let s = pts(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(estimate_g(&s, 5000, 11).unwrap(), estimate_g(&s, 5000, 11).unwrap());
    }
}
