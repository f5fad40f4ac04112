//! Named batteries of acceptance criteria.

use chaining::battery::{run_criterion, CriterionReport, Scale, CRITERIA};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{usage, Result};
use crate::report::Series;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub battery: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

/// `acceptance` runs the full battery, `smoke` a miniature of it, `empty`
/// nothing. `only` restricts the criterion ids when nonempty.
pub fn run_suite(name: &str, seed: u64, only: &[u8]) -> Result<Summary> {
    let scale = match name {
        "acceptance" => Some(Scale::Full),
        "smoke" => Some(Scale::Smoke),
        "empty" => None,
        other => return Err(usage(format!("unknown battery {other:?}; expected acceptance, smoke or empty"))),
    };
    if let Some(bad) = only.iter().find(|&&id| !CRITERIA.iter().any(|c| c.0 == id)) {
        return Err(usage(format!("no criterion {bad}")));
    }
    let ids: Vec<u8> = match scale {
        None => Vec::new(),
        Some(_) => CRITERIA.iter().map(|c| c.0).filter(|id| only.is_empty() || only.contains(id)).collect(),
    };
    // Criteria are independent; the collected order stays the id order.
    let criteria: Vec<CriterionReport> = ids
        .par_iter()
        .map(|&id| {
            run_criterion(id, seed, scale.expect("nonempty battery")).unwrap_or_else(|e| CriterionReport {
                id,
                name: CRITERIA[usize::from(id) - 1].1.to_string(),
                passed: false,
                instances: 0,
                constants: Default::default(),
                failures: vec![format!("error: {e}")],
            })
        })
        .collect();
    Ok(Summary {
        battery: name.to_string(),
        seed,
        scale,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

impl Summary {
    /// Realized constants as `criterion, value` rows, one series per constant name.
    pub fn series(&self) -> Vec<Series> {
        let mut out: Vec<Series> = Vec::new();
        for c in &self.criteria {
            for (k, v) in &c.constants {
                let name = format!("c{}_{k}", c.id);
                out.push(Series::new(&name, "criterion", k, vec![(f64::from(c.id), *v)]));
            }
        }
        out
    }
}
