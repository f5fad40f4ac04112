//! Integer profiles of a vector in the `ℓ1` unit ball: how many coordinates
//! exceed each level `r^{-ℓ}`, on the scale `r^{3q/2}`, smoothed to be 1-Lipschitz.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::Checks;

/// Sequences `q_ℓ`, `p_ℓ` (`ℓ ≥ 1`) of a vector `y` with `‖y‖₁ ≤ 1`.
///
/// `q_ℓ` is the smallest integer with `#{|y| ≥ r^{-ℓ}} ≤ r^{3q/2}`, or
/// `-⌈2ℓ/3⌉ - 1` when that set is empty, and `p_ℓ = max_{m≥1}(q_m - |m - ℓ|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSeq {
    r: f64,
    /// Magnitudes of the nonzero coordinates, decreasing.
    mags: Vec<f64>,
    /// First level counting every nonzero coordinate.
    settle: usize,
    /// From this level on, `p` is constant (nonzero `y`) or equal to `q` (`y = 0`).
    horizon: usize,
}

impl PSeq {
    fn from_vector(y: &[f64], r: f64) -> Self {
        let mut mags: Vec<f64> = y.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let mut s = PSeq {
            r,
            mags,
            settle: 1,
            horizon: 1,
        };
        if let Some(&smallest) = s.mags.last() {
            while smallest < r.powi(-(s.settle as i32)) {
                s.settle += 1;
            }
            let c = s.q(s.settle);
            let peak = (1..s.settle).map(|m| s.q(m)).max().unwrap_or(c).max(c);
            s.horizon = s.settle + (peak - c) as usize;
        }
        s
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `#{ω : |y(ω)| ≥ r^{-ℓ}}`.
    pub fn count(&self, ell: usize) -> usize {
        let t = self.r.powi(-(ell as i32));
        self.mags.partition_point(|&v| v >= t)
    }

    /// `#{ω : r^{-ℓ} ≤ |y(ω)| ≤ r^{-ℓ+1}}`.
    pub fn annulus(&self, ell: usize) -> usize {
        let (lo, hi) = (self.r.powi(-(ell as i32)), self.r.powi(1 - ell as i32));
        self.mags.iter().filter(|&&v| v >= lo && v <= hi).count()
    }

    pub fn q(&self, ell: usize) -> i32 {
        assert!(ell >= 1, "levels start at 1");
        let n = self.count(ell);
        if n == 0 {
            return -((2 * ell as i32 + 2) / 3) - 1;
        }
        let fits = |q: i32| n as f64 <= self.r.powf(1.5 * f64::from(q));
        let mut q = (2.0 * (n as f64).ln() / (3.0 * self.r.ln())).ceil() as i32;
        while fits(q - 1) {
            q -= 1;
        }
        while !fits(q) {
            q += 1;
        }
        q
    }

    pub fn p(&self, ell: usize) -> i32 {
        // Past `settle` q is nonincreasing, so larger m cannot win.
        let top = ell.max(self.settle);
        (1..=top)
            .map(|m| self.q(m) - (m as i32 - ell as i32).abs())
            .max()
            .expect("range is nonempty")
    }

    pub fn p_prefix(&self, len: usize) -> Vec<i32> {
        (1..=len).map(|l| self.p(l)).collect()
    }
}

/// `(1 + 2/(√r - 1)) (r^{3/2} r/(r-1) + r^{-7/2}/(1 - r^{-2}))`, a bound on
/// `Σ_ℓ r^{3p_ℓ/2 - ℓ}` valid for every `y` in the `ℓ1` unit ball.
pub fn pseq_constant(r: f64) -> f64 {
    (1.0 + 2.0 / (r.sqrt() - 1.0)) * (r.powf(1.5) * r / (r - 1.0) + r.powf(-3.5) / (1.0 - r.powi(-2)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PSeqReport {
    /// `Σ_{ℓ≥1} r^{3p_ℓ/2 - ℓ}`, tail bounded geometrically.
    pub sum: f64,
    pub k_r: f64,
    pub horizon: usize,
    pub checks: Checks,
}

/// Builds the sequences of `y` and checks the level-set bound (both for the
/// annuli and the cumulative sets), the summability bound and the Lipschitz property.
pub fn pseq_build(y: &[f64], r: f64) -> Result<(PSeq, PSeqReport)> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(invalid(format!("r must exceed 1, got {r}")));
    }
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    if !(l1 <= 1.0 + 1e-12) {
        return Err(Error::Precondition(format!("‖y‖₁ = {l1} exceeds 1")));
    }
    let s = PSeq::from_vector(y, r);
    let mut checks = Checks::new();
    let span = s.horizon + 64;
    let term = |l: usize| r.powf(1.5 * f64::from(s.p(l)) - l as f64);
    let mut sum = 0.0;
    for l in 1..=span {
        let p = s.p(l);
        let cap = r.powf(1.5 * f64::from(p));
        checks.le_detail("annulus level-set bound", s.annulus(l) as f64, cap, || format!("level {l}"));
        checks.le_detail("cumulative level-set bound", s.count(l) as f64, cap, || format!("level {l}"));
        checks.le_detail("lipschitz profile", f64::from((s.p(l + 1) - p).abs()), 1.0, || {
            format!("level {l}")
        });
        sum += term(l);
    }
    // Terms shrink by at least a factor r per level past the horizon.
    sum += term(span + 1) * r / (r - 1.0);
    let k_r = pseq_constant(r);
    checks.le("profile sum", sum, k_r);
    Ok((
        s.clone(),
        PSeqReport {
            sum,
            k_r,
            horizon: s.horizon,
            checks,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vector_uses_the_cap() {
        let (s, rep) = pseq_build(&[0.0, 0.0], 4.0).unwrap();
        assert_eq!((1..=6).map(|l| s.q(l)).collect::<Vec<_>>(), vec![-2, -3, -3, -4, -5, -5]);
        assert_eq!((1..=6).map(|l| s.p(l)).collect::<Vec<_>>(), vec![-2, -3, -3, -4, -5, -5]);
        assert!(rep.checks.all_passed());
    }

    #[test]
    fn unit_vector() {
        // One coordinate of size 1: every level set holds one point, so q = p = 0.
        let (s, rep) = pseq_build(&[1.0, 0.0, 0.0], 4.0).unwrap();
        assert!((1..=10).all(|l| s.q(l) == 0 && s.p(l) == 0));
        // Σ 4^{-ℓ} = 1/3.
        assert!((rep.sum - 1.0 / 3.0).abs() < 1e-12, "{}", rep.sum);
    }

    #[test]
    fn spread_vector_hand_values() {
        // 16 coordinates of 1/16 with r = 4: empty at ℓ = 1, full from ℓ = 2.
        let y = vec![1.0 / 16.0; 16];
        let (s, rep) = pseq_build(&y, 4.0).unwrap();
        assert_eq!(s.q(1), -2);
        // 16 ≤ 4^{3q/2} first for q = 2 (4^3 = 64 ≥ 16 > 4^{1.5} = 8).
        assert_eq!(s.q(2), 2);
        assert_eq!(s.p(1), 1);
        assert!(rep.checks.all_passed(), "{:?}", rep.checks);
    }

    #[test]
    fn rejects_outside_ball() {
        assert!(pseq_build(&[0.7, 0.7], 4.0).is_err());
    }
}
