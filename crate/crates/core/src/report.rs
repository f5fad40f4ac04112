//! Named inequality checks collected by pipelines.

use serde::{Deserialize, Serialize};

/// One evaluated inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// An ordered list of checks. Only the worst instance of each name is kept
/// unless a failure occurs, in which case the first failure is kept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Checks {
    pub items: Vec<Check>,
}

impl Checks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `lhs <= rhs` exactly.
    pub fn le(&mut self, name: &str, lhs: f64, rhs: f64) -> bool {
        self.le_detail(name, lhs, rhs, String::new)
    }

    /// Records `lhs <= rhs` with a lazily built detail attached on failure.
    pub fn le_detail(&mut self, name: &str, lhs: f64, rhs: f64, detail: impl FnOnce() -> String) -> bool {
        let passed = lhs <= rhs;
        let slack = rhs - lhs;
        match self.items.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                if c.passed && (!passed || slack < c.rhs - c.lhs) {
                    c.lhs = lhs;
                    c.rhs = rhs;
                    c.passed = passed;
                    c.detail = if passed { String::new() } else { detail() };
                }
            }
            None => self.items.push(Check {
                name: name.to_string(),
                lhs,
                rhs,
                passed,
                detail: if passed { String::new() } else { detail() },
            }),
        }
        passed
    }

    /// Records a boolean condition.
    pub fn holds(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) -> bool {
        self.le_detail(name, if ok { 0.0 } else { 1.0 }, 0.0, detail)
    }

    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.items.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.items.iter().find(|c| c.name == name)
    }

    pub fn extend(&mut self, other: Checks) {
        for c in other.items {
            let detail = c.detail.clone();
            self.le_detail(&c.name, c.lhs, c.rhs, || detail);
        }
    }
}
