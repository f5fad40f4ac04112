//! Finitely supported probability measures on the ids of a point set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the total mass.
pub const MASS_TOL: f64 = 1e-9;

/// Probability weights on point ids. Serialized as `{"atoms": [[id, mass], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    atoms: Vec<(usize, f64)>,
}

#[derive(Deserialize)]
struct RawMeasure {
    atoms: Vec<(usize, f64)>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = Error;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.atoms)
    }
}

impl DiscreteMeasure {
    /// Merges repeated ids, drops zero masses and checks the total.
    pub fn new(atoms: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (id, m) in atoms {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(invalid(format!("mass of atom {id} must be finite and nonnegative")));
            }
            *merged.entry(id).or_default() += m;
        }
        let atoms: Vec<(usize, f64)> = merged.into_iter().filter(|&(_, m)| m > 0.0).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("masses sum to {total}, expected 1")));
        }
        Ok(DiscreteMeasure { atoms })
    }

    /// Rescales nonnegative weights to total mass one.
    pub fn normalized(weights: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let w: Vec<(usize, f64)> = weights.into_iter().collect();
        let total: f64 = w.iter().map(|a| a.1).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(invalid("weights must have positive finite total"));
        }
        DiscreteMeasure::new(w.into_iter().map(|(i, m)| (i, m / total)))
    }

    pub fn dirac(id: usize) -> Self {
        DiscreteMeasure {
            atoms: vec![(id, 1.0)],
        }
    }

    pub fn uniform(ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptySet);
        }
        let m = 1.0 / ids.len() as f64;
        DiscreteMeasure::new(ids.iter().map(|&i| (i, m)))
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    pub fn mass_of(&self, id: usize) -> f64 {
        self.atoms
            .binary_search_by_key(&id, |a| a.0)
            .map(|p| self.atoms[p].1)
            .unwrap_or(0.0)
    }

    /// Mass of a set of ids (each id counted once if `ids` has no repeats).
    pub fn mass(&self, ids: &[usize]) -> f64 {
        ids.iter().map(|&i| self.mass_of(i)).sum()
    }

    /// Dense weight vector of length `card`.
    pub fn dense(&self, card: usize) -> Vec<f64> {
        let mut v = vec![0.0; card];
        for &(i, m) in &self.atoms {
            if i < card {
                v[i] = m;
            }
        }
        v
    }

    /// Fails when an atom id is not below `card`.
    pub fn check_support(&self, card: usize) -> Result<()> {
        match self.atoms.iter().find(|a| a.0 >= card) {
            Some(&(id, _)) => Err(invalid(format!("atom {id} outside a set of {card} points"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_validates() {
        let m = DiscreteMeasure::new([(2, 0.25), (0, 0.5), (2, 0.25)]).unwrap();
        assert_eq!(m.atoms(), &[(0, 0.5), (2, 0.5)]);
        assert!(DiscreteMeasure::new([(0, 0.4)]).is_err());
        assert!(m.check_support(2).is_err());
    }

    #[test]
    fn json_shape() {
        let m = DiscreteMeasure::new([(0, 0.75), (1, 0.25)]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"atoms":[[0,0.75],[1,0.25]]}"#);
        let back: DiscreteMeasure = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<DiscreteMeasure>(r#"{"atoms":[[0,0.3]]}"#).is_err());
    }
}
