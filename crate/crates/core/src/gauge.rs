//! Gauges of balanced convex bodies and minimization over translated copies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A balanced convex body described through its gauge `‖·‖_B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeOracle {
    /// `{x : Σ (x_i / a_i)² ≤ 1}`.
    Ellipsoid { semiaxes: Vec<f64> },
    /// Unit ball of `ℓ_p` in `dim` coordinates, `1 ≤ p < ∞`.
    LpBall { dim: usize, p: f64 },
    /// Unit cube `[-1, 1]^dim`.
    Cube { dim: usize },
    /// Polytope `{x : |⟨w_j, x⟩| ≤ 1 for all j}` cut out by sampled directions.
    Hull { directions: Vec<Vec<f64>> },
}

impl GaugeOracle {
    pub fn euclidean(dim: usize) -> Self {
        GaugeOracle::Ellipsoid {
            semiaxes: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GaugeOracle::Ellipsoid { semiaxes } => {
                if semiaxes.is_empty() {
                    return Err(invalid("ellipsoid needs at least one semiaxis"));
                }
                if semiaxes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(invalid("ellipsoid semiaxes must be positive and finite"));
                }
            }
            GaugeOracle::LpBall { dim, p } => {
                if *dim == 0 {
                    return Err(invalid("lp ball dimension must be positive"));
                }
                if !(*p >= 1.0 && p.is_finite()) {
                    return Err(invalid(format!("lp ball needs 1 <= p < inf, got {p}")));
                }
            }
            GaugeOracle::Cube { dim } => {
                if *dim == 0 {
                    return Err(invalid("cube dimension must be positive"));
                }
            }
            GaugeOracle::Hull { directions } => {
                let Some(first) = directions.first() else {
                    return Err(invalid("hull needs at least one direction"));
                };
                if first.is_empty() || directions.iter().any(|w| w.len() != first.len()) {
                    return Err(invalid("hull directions must share a positive dimension"));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            GaugeOracle::Ellipsoid { semiaxes } => semiaxes.len(),
            GaugeOracle::LpBall { dim, .. } | GaugeOracle::Cube { dim } => *dim,
            GaugeOracle::Hull { directions } => directions[0].len(),
        }
    }

    /// Gauge value `‖x‖_B`.
    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            GaugeOracle::Ellipsoid { semiaxes } => x
                .iter()
                .zip(semiaxes)
                .map(|(v, a)| (v / a) * (v / a))
                .sum::<f64>()
                .sqrt(),
            GaugeOracle::LpBall { p, .. } => {
                if *p == 1.0 {
                    x.iter().map(|v| v.abs()).sum()
                } else if *p == 2.0 {
                    x.iter().map(|v| v * v).sum::<f64>().sqrt()
                } else {
                    x.iter().map(|v| v.abs().powf(*p)).sum::<f64>().powf(1.0 / p)
                }
            }
            GaugeOracle::Cube { .. } => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            GaugeOracle::Hull { directions } => directions
                .iter()
                .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().abs())
                .fold(0.0, f64::max),
        }
    }

    /// Gauge of the difference `x - y`.
    pub fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.norm(&d)
    }

    /// Semiaxes when the body is an ellipsoid (the Euclidean `ℓ_2` ball included).
    pub fn as_ellipsoid(&self) -> Option<Vec<f64>> {
        match self {
            GaugeOracle::Ellipsoid { semiaxes } => Some(semiaxes.clone()),
            GaugeOracle::LpBall { dim, p } if *p == 2.0 => Some(vec![1.0; *dim]),
            _ => None,
        }
    }

    /// A copy of the body dilated by `c > 0`, whose gauge is `‖·‖ / c`.
    /// Lp balls other than `p = 2` and cubes have no closed dilated form here.
    pub fn dilated(&self, c: f64) -> Option<GaugeOracle> {
        match self {
            GaugeOracle::Hull { directions } => Some(GaugeOracle::Hull {
                directions: directions
                    .iter()
                    .map(|w| w.iter().map(|v| v / c).collect())
                    .collect(),
            }),
            other => other.as_ellipsoid().map(|axes| GaugeOracle::Ellipsoid {
                semiaxes: axes.iter().map(|a| a * c).collect(),
            }),
        }
    }

    /// `inf{‖x + c·u‖_B : ‖u‖_U ≤ 1}` with `B = self`.
    ///
    /// Exact (Lagrange bisection) when both bodies are ellipsoids; otherwise a
    /// discrete minimization over the sphere of `U`, which yields an upper
    /// bound of the infimum.
    pub fn min_over_translate(&self, x: &[f64], c: f64, u: &GaugeOracle) -> Result<f64> {
        if x.len() != self.dim() || u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len().max(u.dim()),
            });
        }
        if u.norm(x) <= c {
            return Ok(0.0);
        }
        match (self.as_ellipsoid(), u.as_ellipsoid()) {
            (Some(a), Some(b)) => ellipsoid_pair_min(x, c, &a, &b),
            _ => Ok(self.discrete_min(x, c, u)),
        }
    }

    fn discrete_min(&self, x: &[f64], c: f64, u: &GaugeOracle) -> f64 {
        let dim = x.len();
        let to_sphere = |v: &mut Vec<f64>| -> bool {
            let n = u.norm(v);
            if n > 0.0 && n.is_finite() {
                v.iter_mut().for_each(|e| *e /= n);
                true
            } else {
                false
            }
        };
        let value = |v: &[f64]| -> f64 {
            let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + c * b).collect();
            self.norm(&y)
        };
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        candidates.push(x.iter().map(|v| -v).collect());
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = s;
                candidates.push(e);
            }
        }
        if let GaugeOracle::Hull { directions } = u {
            candidates.extend(directions.iter().cloned());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            candidates.push((0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect());
        }
        let mut best_v = Vec::new();
        let mut best = f64::INFINITY;
        for mut v in candidates {
            if !to_sphere(&mut v) {
                continue;
            }
            let f = value(&v);
            if f < best {
                best = f;
                best_v = v;
            }
        }
        // Pattern search around the best candidate.
        let mut step = 0.5;
        while step > 1e-9 {
            let mut improved = false;
            for i in 0..dim {
                for s in [step, -step] {
                    let mut v = best_v.clone();
                    v[i] += s;
                    if !to_sphere(&mut v) {
                        continue;
                    }
                    let f = value(&v);
                    if f < best {
                        best = f;
                        best_v = v;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }
}

/// Minimizes `Σ y_i²/a_i²` over `Σ (y_i - x_i)²/(c b_i)² ≤ 1`, assuming `x` lies
/// outside the constraint ellipsoid centred at zero.
fn ellipsoid_pair_min(x: &[f64], c: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    let cb2: Vec<f64> = b.iter().map(|bi| c * c * bi * bi).collect();
    let a2: Vec<f64> = a.iter().map(|ai| ai * ai).collect();
    let g = |lam: f64| -> f64 {
        x.iter()
            .zip(&cb2)
            .zip(&a2)
            .map(|((xi, cbi), ai)| {
                let den = cbi + lam * ai;
                xi * xi * cbi / (den * den)
            })
            .sum::<f64>()
            - 1.0
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::Numerical("multiplier bracket did not close".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            break;
        }
    }
    let lam = 0.5 * (lo + hi);
    let residual = g(lam).abs();
    if residual > 1e-10 {
        return Err(Error::Numerical(format!(
            "multiplier bisection residual {residual:e} above tolerance"
        )));
    }
    let val = x
        .iter()
        .zip(&cb2)
        .zip(&a2)
        .map(|((xi, cbi), ai)| {
            let yi = xi * lam * ai / (cbi + lam * ai);
            yi * yi / ai
        })
        .sum::<f64>()
        .sqrt();
    Ok(val)
}
