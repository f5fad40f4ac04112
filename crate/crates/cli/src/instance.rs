//! Instance specs (`kind:key=value,...`), generators and instance files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chaining::battery::random_pl;
use chaining::function_class::PLFunction;
use chaining::mc::GroupTable;
use chaining::PointSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read, usage, CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFamily {
    Cyclic,
    Dihedral,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSpec {
    /// `card` points uniform in the Euclidean ball of `ℝ^dim`, each
    /// coordinate then zeroed with probability `sparsity`.
    RandomCloud { dim: usize, card: usize, radius: f64, sparsity: f64 },
    Ellipsoid { semiaxes: Vec<f64> },
    Basis { n: usize },
    /// A Cayley table with a function `f: G → [-1, 1]` drawn from `f_seed`.
    Group { family: GroupFamily, n: usize, f_seed: u64 },
    /// Random piecewise linear functions of variation at most 1 at resolution `l_max`.
    FunctionClass { l_max: u32, count: usize },
    CustomFile { path: PathBuf },
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| usage(format!("instance parameter {key} = {v} is not a valid number")))
}

/// Splits `a=1,b=2` into pairs, rejecting keys outside `allowed`.
fn pairs<'a>(args: &'a str, allowed: &[&str]) -> Result<Vec<(&'a str, &'a str)>> {
    let mut out = Vec::new();
    for item in args.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("instance parameter {item} must be key=value")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(usage(format!("unknown instance parameter {k}; expected one of {}", allowed.join(", "))));
        }
        out.push((k, v));
    }
    Ok(out)
}

impl FromStr for InstanceSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let spec = match kind.trim() {
            "random-cloud" => {
                let (mut dim, mut card, mut radius, mut sparsity) = (8, 64, 1.0, 0.0);
                for (k, v) in pairs(args, &["dim", "card", "radius", "sparsity"])? {
                    match k {
                        "dim" => dim = parse_num(k, v)?,
                        "card" => card = parse_num(k, v)?,
                        "radius" => radius = parse_num(k, v)?,
                        _ => sparsity = parse_num(k, v)?,
                    }
                }
                InstanceSpec::RandomCloud { dim, card, radius, sparsity }
            }
            "ellipsoid" => InstanceSpec::Ellipsoid {
                semiaxes: args.split(',').map(|v| parse_num("semiaxis", v)).collect::<Result<_>>()?,
            },
            "basis" => InstanceSpec::Basis { n: parse_num("n", args)? },
            "group" => {
                let mut found = None;
                let mut f_seed = 0;
                for (k, v) in pairs(args, &["cyclic", "dihedral", "f_seed"])? {
                    match k {
                        "cyclic" => found = Some((GroupFamily::Cyclic, parse_num(k, v)?)),
                        "dihedral" => found = Some((GroupFamily::Dihedral, parse_num(k, v)?)),
                        _ => f_seed = parse_num(k, v)?,
                    }
                }
                let (family, n) = found.ok_or_else(|| usage("group needs cyclic=<n> or dihedral=<n>"))?;
                InstanceSpec::Group { family, n, f_seed }
            }
            "function-class" => {
                let (mut l_max, mut count) = (6, 20);
                for (k, v) in pairs(args, &["l_max", "count"])? {
                    match k {
                        "l_max" => l_max = parse_num(k, v)?,
                        _ => count = parse_num(k, v)?,
                    }
                }
                InstanceSpec::FunctionClass { l_max, count }
            }
            "file" | "custom-file" if !args.is_empty() => InstanceSpec::CustomFile { path: args.into() },
            other => {
                return Err(usage(format!(
                    "unknown instance {other:?}; expected random-cloud, ellipsoid, basis, group, function-class or file:<path>"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSpec::RandomCloud { dim, card, radius, sparsity } => {
                write!(f, "random-cloud:dim={dim},card={card},radius={radius},sparsity={sparsity}")
            }
            InstanceSpec::Ellipsoid { semiaxes } => {
                let axes: Vec<String> = semiaxes.iter().map(f64::to_string).collect();
                write!(f, "ellipsoid:{}", axes.join(","))
            }
            InstanceSpec::Basis { n } => write!(f, "basis:{n}"),
            InstanceSpec::Group { family, n, f_seed } => {
                let fam = match family {
                    GroupFamily::Cyclic => "cyclic",
                    GroupFamily::Dihedral => "dihedral",
                };
                write!(f, "group:{fam}={n},f_seed={f_seed}")
            }
            InstanceSpec::FunctionClass { l_max, count } => write!(f, "function-class:l_max={l_max},count={count}"),
            InstanceSpec::CustomFile { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl Serialize for InstanceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl InstanceSpec {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            InstanceSpec::RandomCloud { dim, card, radius, sparsity } => {
                *dim > 0 && *card > 0 && *radius > 0.0 && radius.is_finite() && (0.0..=1.0).contains(sparsity)
            }
            InstanceSpec::Ellipsoid { semiaxes } => {
                !semiaxes.is_empty() && semiaxes.iter().all(|a| *a > 0.0 && a.is_finite())
            }
            InstanceSpec::Basis { n } | InstanceSpec::Group { n, .. } => *n > 0,
            InstanceSpec::FunctionClass { l_max, count } => {
                *count > 0 && *l_max <= chaining::function_class::MAX_RESOLUTION
            }
            InstanceSpec::CustomFile { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(usage(format!("invalid instance parameters in {self}")))
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Instance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            &InstanceSpec::RandomCloud { dim, card, radius, sparsity } => {
                let mut set = chaining::battery::ball_cloud(&mut rng, dim, card, radius)?;
                if sparsity > 0.0 {
                    let rows = set
                        .points()
                        .iter()
                        .map(|p| p.iter().map(|&v| if rng.random::<f64>() < sparsity { 0.0 } else { v }).collect())
                        .collect();
                    set = PointSet::new(dim, rows)?;
                }
                for (i, p) in set.points().iter().enumerate() {
                    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > radius * (1.0 + 1e-12) {
                        return Err(chaining::Error::Numerical(format!("point {i} has norm {norm} > {radius}")).into());
                    }
                }
                Instance::Points(set.with_name(self.to_string()))
            }
            InstanceSpec::Ellipsoid { semiaxes } => Instance::Ellipsoid {
                semiaxes: semiaxes.clone(),
            },
            &InstanceSpec::Basis { n } => Instance::Points(chaining::battery::basis(n)?.with_name(self.to_string())),
            &InstanceSpec::Group { family, n, f_seed } => {
                let table = match family {
                    GroupFamily::Cyclic => GroupTable::cyclic(n)?,
                    GroupFamily::Dihedral => GroupTable::dihedral(n)?,
                };
                let mut frng = ChaCha8Rng::seed_from_u64(f_seed);
                let f = (0..table.order()).map(|_| frng.random_range(-1.0..=1.0)).collect();
                Instance::Group { table, f }
            }
            &InstanceSpec::FunctionClass { l_max, count } => Instance::Functions {
                functions: (0..count).map(|_| random_pl(&mut rng, l_max)).collect::<chaining::Result<_>>()?,
            },
            InstanceSpec::CustomFile { path } => Instance::load(path)?,
        })
    }
}

/// A generated or loaded instance, stored as JSON with a `kind` tag; point
/// sets also load from CSV and from the untagged `{dim, points, name}` envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Instance {
    Points(PointSet),
    Ellipsoid { semiaxes: Vec<f64> },
    Group { table: GroupTable, f: Vec<f64> },
    Functions { functions: Vec<PLFunction> },
}

impl Instance {
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "csv") {
            return Ok(Instance::Points(PointSet::from_csv(&read(path)?)?));
        }
        let text = read(path)?;
        match serde_json::from_str::<Instance>(&text) {
            Ok(inst) => Ok(inst),
            Err(tagged) => PointSet::from_json(&text)
                .map(Instance::Points)
                .map_err(|_| usage(format!("{}: not an instance file ({tagged})", path.display()))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Points(_) => "points",
            Instance::Ellipsoid { .. } => "ellipsoid",
            Instance::Group { .. } => "group",
            Instance::Functions { .. } => "functions",
        }
    }

    /// Writes `instance.json`, plus `instance.csv` for point sets.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let json = dir.join("instance.json");
        crate::error::write(&json, &serde_json::to_string_pretty(self)?)?;
        let mut written = vec![json];
        if let Instance::Points(set) = self {
            let csv = dir.join("instance.csv");
            crate::error::write(&csv, &set.to_csv())?;
            written.push(csv);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_round_trip_through_display() {
        for s in [
            "random-cloud:dim=3,card=5,radius=0.5,sparsity=0.25",
            "ellipsoid:1,0.5",
            "basis:2",
            "group:dihedral=3,f_seed=9",
            "function-class:l_max=4,count=3",
            "file:x.csv",
        ] {
            let spec: InstanceSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        for s in ["basis:0", "random-cloud:sparsity=2", "group:f_seed=1", "ellipsoid:1,-1", "cloud", "basis:x"] {
            assert!(s.parse::<InstanceSpec>().is_err(), "{s}");
        }
    }
}
