//! Vector families in a finite-dimensional normed space, the associated
//! reproducing-kernel geometry, subset extraction and Gaussian widths.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{draws, Estimate};
use crate::error::{invalid, Error, Result};
use crate::gauge::GaugeOracle;
use crate::metric::PointSet;
use crate::report::Checks;

/// Vectors `x_1, …, x_M` in `ℝ^n` with the norm of a gauge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFamily {
    pub vectors: Vec<Vec<f64>>,
    pub norm: GaugeOracle,
}

impl VectorFamily {
    pub fn new(vectors: Vec<Vec<f64>>, norm: GaugeOracle) -> Result<Self> {
        norm.validate()?;
        let n = norm.dim();
        if n == 0 {
            return Err(invalid("space dimension must be positive"));
        }
        if vectors.is_empty() {
            return Err(Error::EmptySet);
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        Ok(VectorFamily { vectors, norm })
    }

    pub fn dim(&self) -> usize {
        self.norm.dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Covariance `Q = Σ x_i x_iᵀ` of `Σ g_i x_i`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut q = DMatrix::zeros(n, n);
        for x in &self.vectors {
            let v = DVector::from_column_slice(x);
            q += &v * v.transpose();
        }
        q
    }

    /// Pseudo-inverse of [`VectorFamily::covariance`]; `⟨x, y⟩_H = xᵀ Q⁺ y` on the span.
    pub fn kernel_inverse(&self) -> Result<DMatrix<f64>> {
        let q = self.covariance();
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        q.pseudo_inverse(1e-12 * scale)
            .map_err(|e| Error::Numerical(e.to_string()))
    }

    /// Reproducing-kernel norms `‖x_i‖_H`; their squares sum to the rank of `Q`.
    pub fn kernel_norms(&self) -> Result<Vec<f64>> {
        let qi = self.kernel_inverse()?;
        Ok(self
            .vectors
            .iter()
            .map(|x| {
                let v = DVector::from_column_slice(x);
                (v.transpose() * &qi * &v)[(0, 0)].max(0.0).sqrt()
            })
            .collect())
    }

    /// Coefficients `(x*(x_i))_i` of a dual vector.
    pub fn coefficients(&self, dual: &[f64]) -> Vec<f64> {
        self.vectors.iter().map(|x| super::dot(x, dual)).collect()
    }

    fn combo(&self, coef: &[f64], subset: Option<&[usize]>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut add = |i: usize| {
            for (o, x) in out.iter_mut().zip(&self.vectors[i]) {
                *o += coef[i] * x;
            }
        };
        match subset {
            Some(ids) => ids.iter().for_each(|&i| add(i)),
            None => (0..self.len()).for_each(&mut add),
        }
    }
}

/// `K` with `E max_k |Z_k| ≤ K sup_k σ_k √(log(k+1))` for centred Gaussians
/// `Z_k` of standard deviations `σ_k` (any dependence).
///
/// Union bound: `P(max > uA) ≤ min(1, Σ_{m≥2} 2 m^{-u²/2})`, integrated over
/// `u` with a left Riemann sum (the integrand decreases, so this is an upper
/// bound) and a tail integral for `m > 1000`.
pub fn hull_constant() -> f64 {
    static K: OnceLock<f64> = OnceLock::new();
    *K.get_or_init(|| {
        let tail = |u: f64| -> f64 {
            let s = u * u / 2.0;
            if s <= 1.0 {
                return 1.0;
            }
            let head: f64 = (2..=1000).map(|m| 2.0 * (m as f64).powf(-s)).sum();
            (head + 2.0 * 1000f64.powf(1.0 - s) / (s - 1.0)).min(1.0)
        };
        let h = 0.01;
        (0..2000).map(|i| tail(i as f64 * h) * h).sum()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub n: usize,
    pub m: usize,
    pub l: f64,
    /// `⌈L n log n⌉`.
    pub budget: usize,
    pub kept: usize,
    /// `Σ ‖x_i‖_H²`, equal to the rank of the family.
    pub kernel_norm_sq_sum: f64,
    pub g_full: Estimate,
    pub g_tail: Estimate,
    pub eps_full: Estimate,
    pub tail_halved: bool,
    /// `Ê‖Σ_{i∉I} g_i x_i‖ / Ê‖Σ ε_i x_i‖`.
    pub realized_k: f64,
    pub k_max: f64,
    /// Either the tail halves the Gaussian mean or `realized_k ≤ k_max`.
    pub disjunction: bool,
    /// Gaussian width of the balanced hull of the tail.
    pub ell_tail: Estimate,
    /// [`hull_constant`] times `sup_k ‖z_k‖_H √(log(k+1))` over the sorted tail.
    pub hull_bound: f64,
    pub checks: Checks,
}

/// Keeps the `⌈L n log n⌉` vectors of largest kernel norm and compares the
/// Gaussian mean of the rest with the full Gaussian and Rademacher means.
pub fn subset_extract(
    fam: &VectorFamily,
    l: f64,
    k_max: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<usize>, ExtractReport)> {
    if !(l > 0.0) {
        return Err(invalid("L must be positive"));
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let (n, m) = (fam.dim(), fam.len());
    let norms = fam.kernel_norms()?;
    let sq_sum: f64 = norms.iter().map(|h| h * h).sum();
    let mut checks = Checks::new();
    checks.le("kernel norm budget", sq_sum, n as f64 * (1.0 + 1e-9));
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let budget = (l * n as f64 * (n as f64).ln()).ceil().max(0.0) as usize;
    let kept = budget.min(m);
    let mut keep: Vec<usize> = order[..kept].to_vec();
    keep.sort_unstable();
    let tail: Vec<usize> = order[kept..].to_vec();
    checks.le("kept count", keep.len() as f64, budget as f64);

    let norm = &fam.norm;
    let gauss = |subset: Option<&[usize]>, signs: bool| -> Vec<f64> {
        draws(n_samples, seed, |rng, buf| {
            buf.resize(m, 0.0);
            for v in buf.iter_mut() {
                *v = if signs {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    rng.sample(StandardNormal)
                };
            }
            let mut out = vec![0.0; n];
            fam.combo(buf, subset, &mut out);
            norm.norm(&out)
        })
    };
    let g_full = Estimate::from_samples(&gauss(None, false), seed);
    let g_tail = Estimate::from_samples(&gauss(Some(&tail), false), seed);
    let eps_full = Estimate::from_samples(&gauss(None, true), seed);
    let tail_halved = g_tail.mean <= 0.5 * g_full.mean;
    let realized_k = if eps_full.mean > 0.0 {
        g_tail.mean / eps_full.mean
    } else if g_tail.mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    let tail_set = PointSet::new(n, tail.iter().map(|&i| fam.vectors[i].clone()).collect());
    let (ell_tail, hull_bound) = match tail_set {
        Ok(a) => {
            let mut both = a.points().to_vec();
            both.extend(a.points().iter().map(|p| p.iter().map(|v| -v).collect()));
            let e = ell_gauss(&PointSet::new(n, both)?, fam, n_samples, seed)?;
            let sup = tail
                .iter()
                .enumerate()
                .map(|(k, &i)| norms[i] * ((k + 2) as f64).ln().sqrt())
                .fold(0.0, f64::max);
            (e, hull_constant() * sup)
        }
        Err(_) => (Estimate::exact(0.0, n_samples), 0.0),
    };
    checks.le("hull width bound", ell_tail.mean, hull_bound + 3.0 * ell_tail.std_err);
    Ok((
        keep,
        ExtractReport {
            n,
            m,
            l,
            budget,
            kept,
            kernel_norm_sq_sum: sq_sum,
            g_full,
            g_tail,
            eps_full,
            tail_halved,
            realized_k,
            k_max,
            disjunction: tail_halved || realized_k <= k_max,
            ell_tail,
            hull_bound,
            checks,
        },
    ))
}

/// `ℓ(A) = E sup_{x ∈ A} ⟨x, Σ_i g_i x_i⟩_H` for `A` in the span of the family.
pub fn ell_gauss(a: &PointSet, fam: &VectorFamily, n_samples: usize, seed: u64) -> Result<Estimate> {
    if a.dim() != fam.dim() {
        return Err(Error::DimensionMismatch {
            expected: fam.dim(),
            found: a.dim(),
        });
    }
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    let qi = fam.kernel_inverse()?;
    // w_x = Q⁺ x, so that ⟨x, y⟩_H = w_x · y.
    let w: Vec<Vec<f64>> = a
        .points()
        .iter()
        .map(|x| (&qi * DVector::from_column_slice(x)).iter().copied().collect())
        .collect();
    let (n, m) = (fam.dim(), fam.len());
    let vals = draws(n_samples, seed, |rng, buf| {
        buf.resize(m, 0.0);
        buf.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut y = vec![0.0; n];
        fam.combo(buf, None, &mut y);
        w.iter().map(|wx| super::dot(wx, &y)).fold(f64::NEG_INFINITY, f64::max)
    });
    Ok(Estimate::from_samples(&vals, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_constant_value() {
        let k = hull_constant();
        assert!(k > 2.49 && k < 2.6, "{k}");
    }

    #[test]
    fn one_dimensional_width() {
        let fam = VectorFamily::new(vec![vec![1.0]], GaugeOracle::euclidean(1)).unwrap();
        let a = PointSet::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap();
        let e = ell_gauss(&a, &fam, 50_000, 9).unwrap();
        assert!(e.agrees((2.0 / std::f64::consts::PI).sqrt(), 4.0), "{e:?}");
        let z = ell_gauss(&PointSet::from_rows(vec![vec![0.0]]).unwrap(), &fam, 100, 1).unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn small_family_keeps_everything() {
        let fam = VectorFamily::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            GaugeOracle::euclidean(2),
        )
        .unwrap();
        let (keep, rep) = subset_extract(&fam, 4.0, 50.0, 500, 1).unwrap();
        assert_eq!(keep, vec![0, 1, 2]);
        assert_eq!(rep.g_tail.mean, 0.0);
        assert!((rep.kernel_norm_sq_sum - 2.0).abs() < 1e-9);
        assert!(rep.disjunction);
    }
}
