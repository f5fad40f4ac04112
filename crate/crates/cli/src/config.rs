//! Run settings: embedded defaults, then a flat `key = value` file with
//! `[section]` headers, then command-line flags. The merged table is echoed
//! into every report.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{usage, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Mmt,
    Convex,
    WeakLp,
    Splits,
    GroupCheck,
    SubsetExtract,
    FunctionClass,
    Comparisons,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Pipeline::Mmt,
        Pipeline::Convex,
        Pipeline::WeakLp,
        Pipeline::Splits,
        Pipeline::GroupCheck,
        Pipeline::SubsetExtract,
        Pipeline::FunctionClass,
        Pipeline::Comparisons,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Mmt => "mmt",
            Pipeline::Convex => "convex",
            Pipeline::WeakLp => "weak-lp",
            Pipeline::Splits => "splits",
            Pipeline::GroupCheck => "group-check",
            Pipeline::SubsetExtract => "subset-extract",
            Pipeline::FunctionClass => "function-class",
            Pipeline::Comparisons => "comparisons",
        }
    }

    /// Keys understood by the pipeline with their defaults; `seed` is shared.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Pipeline::Mmt => &[("r", "4"), ("samples", "4000"), ("k_theta", "4")],
            Pipeline::Convex => &[("r", "8"), ("alpha", "0.5"), ("beta", "2"), ("budget", "2000")],
            Pipeline::WeakLp => &[
                ("p", "1.5"),
                ("r", "4"),
                ("l", "8"),
                ("h", "4"),
                ("samples", "1000"),
                ("max_levels", "8"),
            ],
            Pipeline::Splits => &[("r", "4"), ("p", "1.5")],
            Pipeline::GroupCheck => &[("i_max", "6"), ("samples", "2000")],
            Pipeline::SubsetExtract => &[("l", "8"), ("k_max", "50"), ("samples", "2000"), ("norm", "cube")],
            Pipeline::FunctionClass => &[("r", "8"), ("intervals", "4")],
            Pipeline::Comparisons => &[("samples", "4000"), ("tau", "1"), ("base", "4")],
        }
    }
}

fn check_value(key: &str, value: &str) -> Result<()> {
    let bad = |what: &str| usage(format!("{key} = {value}: {what}"));
    let float = || value.parse::<f64>().ok().filter(|v| v.is_finite());
    match key {
        "seed" => value.parse::<u64>().map(drop).map_err(|_| bad("expected an unsigned integer")),
        "samples" | "budget" | "max_levels" | "intervals" | "base" => match value.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(()),
            _ => Err(bad("expected a positive integer")),
        },
        "i_max" => value.parse::<u32>().map(drop).map_err(|_| bad("expected a nonnegative integer")),
        "r" => float().filter(|&v| v > 1.0).map(drop).ok_or_else(|| bad("expected a number above 1")),
        "p" => float()
            .filter(|v| (1.0..2.0).contains(v))
            .map(drop)
            .ok_or_else(|| bad("expected a number in [1, 2)")),
        "norm" => match value {
            "cube" | "euclidean" => Ok(()),
            _ => Err(bad("expected cube or euclidean")),
        },
        _ => float().filter(|&v| v > 0.0).map(drop).ok_or_else(|| bad("expected a positive number")),
    }
}

/// Sections of a config file: `[run]` applies to every pipeline where the
/// key is meaningful, `[<pipeline>]` only to that pipeline.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, Vec<(String, String, usize)>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Vec<(String, String, usize)>> = BTreeMap::new();
        let mut current = "run".to_string();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name != "run" && !Pipeline::ALL.iter().any(|p| p.name() == name) {
                    return Err(usage(format!("config line {}: unknown section [{name}]", n + 1)));
                }
                current = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key = value", n + 1)))?;
            sections
                .entry(current.clone())
                .or_default()
                .push((k.trim().to_string(), v.trim().to_string(), n + 1));
        }
        Ok(ConfigFile { sections })
    }

    fn entries(&self, section: &str) -> &[(String, String, usize)] {
        self.sections.get(section).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Effective settings of one run, all values validated.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Later layers win; flag overrides must name keys of the pipeline.
    pub fn resolve(pipeline: Pipeline, file: Option<&ConfigFile>, overrides: &[(String, String)]) -> Result<Self> {
        let defaults = pipeline.defaults();
        let known = |k: &str| k == "seed" || defaults.iter().any(|(d, _)| *d == k);
        let mut values: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        values.insert("seed".into(), "0".into());
        if let Some(file) = file {
            for (k, v, _) in file.entries("run") {
                if known(k) {
                    values.insert(k.clone(), v.clone());
                }
            }
            for (k, v, line) in file.entries(pipeline.name()) {
                if !known(k) {
                    return Err(usage(format!("config line {line}: {k} is not a {} setting", pipeline.name())));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in overrides {
            if !known(k) {
                return Err(usage(format!("{k} is not a {} setting", pipeline.name())));
            }
            values.insert(k.clone(), v.clone());
        }
        for (k, v) in &values {
            check_value(k, v)?;
        }
        Ok(Settings { values })
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("setting {key} has no default"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.raw(key).parse().expect("validated")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.raw(key).parse().expect("validated")
    }

    pub fn seed(&self) -> u64 {
        self.raw("seed").parse().expect("validated")
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }
}
