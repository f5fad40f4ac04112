//! Machine-readable reports and plot-ready series.

use std::path::Path;

use chaining::partition::Failure;
use chaining::report::Checks;
use serde::Serialize;

use crate::config::Settings;
use crate::error::{write, Result};

/// One violated inequality or invariant, named by what it bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureRecord {
    pub check: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

/// A tracked ratio as `(x, y)` rows, emitted as `<name>.tsv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub x: String,
    pub y: String,
    pub rows: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, x: &str, y: &str, rows: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            x: x.into(),
            y: y.into(),
            rows,
        }
    }

    pub fn tsv(&self) -> String {
        let mut out = format!("{}\t{}\n", self.x, self.y);
        for (x, y) in &self.rows {
            out.push_str(&format!("{x}\t{y}\n"));
        }
        out
    }
}

/// Collects failures of one run; `evaluated` counts the named checks seen.
#[derive(Debug, Default)]
pub struct Verdict {
    pub failures: Vec<FailureRecord>,
    pub evaluated: usize,
}

impl Verdict {
    pub fn checks(&mut self, scope: &str, checks: &Checks) {
        self.evaluated += checks.items.len();
        for c in checks.failures() {
            self.failures.push(FailureRecord {
                check: c.name.clone(),
                lhs: Some(c.lhs),
                rhs: Some(c.rhs),
                detail: join(scope, &c.detail),
            });
        }
    }

    pub fn tree(&mut self, scope: &str, failures: &[Failure]) {
        self.evaluated += 1;
        for f in failures {
            self.failures.push(FailureRecord {
                check: f.check.to_string(),
                lhs: None,
                rhs: None,
                detail: join(scope, &format!("level {} cell {}: {}", f.level, f.cell, f.detail)),
            });
        }
    }

    pub fn le(&mut self, check: &str, lhs: f64, rhs: f64, detail: impl Into<String>) {
        self.evaluated += 1;
        if !(lhs <= rhs) {
            self.failures.push(FailureRecord {
                check: check.into(),
                lhs: Some(lhs),
                rhs: Some(rhs),
                detail: detail.into(),
            });
        }
    }

    pub fn holds(&mut self, check: &str, ok: bool, detail: impl FnOnce() -> String) {
        self.evaluated += 1;
        if !ok {
            self.failures.push(FailureRecord {
                check: check.into(),
                lhs: None,
                rhs: None,
                detail: detail(),
            });
        }
    }
}

fn join(scope: &str, detail: &str) -> String {
    match (scope.is_empty(), detail.is_empty()) {
        (true, _) => detail.to_string(),
        (false, true) => scope.to_string(),
        (false, false) => format!("{scope}: {detail}"),
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settings: Option<Settings>,
    pub passed: bool,
    pub checks_evaluated: usize,
    pub failures: Vec<FailureRecord>,
    /// Reported but not asserted, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unasserted: Vec<FailureRecord>,
    pub results: serde_json::Value,
}

/// Writes `report.json`, the series and the artifacts under `dir`, or prints
/// the report to stdout when no directory is given.
pub fn emit(
    report: &Report,
    series: &[Series],
    artifacts: &[(String, serde_json::Value)],
    dir: Option<&Path>,
) -> Result<()> {
    let json = serde_json::to_string_pretty(report)? + "\n";
    match dir {
        Some(dir) => {
            write(&dir.join("report.json"), &json)?;
            for s in series {
                write(&dir.join(format!("{}.tsv", s.name)), &s.tsv())?;
            }
            for (name, value) in artifacts {
                write(&dir.join(name), &(serde_json::to_string_pretty(value)? + "\n"))?;
            }
        }
        None => print!("{json}"),
    }
    Ok(())
}
