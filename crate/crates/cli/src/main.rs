//! `chaining`: generate instances, run pipelines, run acceptance batteries and
//! re-check serialized artifacts.
//!
//! Exit codes: 0 when every asserted check holds, 2 when one fails, 3 when
//! an input is rejected, 1 on other errors.

mod bundle;
mod config;
mod error;
mod instance;
mod pipelines;
mod report;
mod suite;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bundle::Bundle;
use crate::config::{ConfigFile, Pipeline, Settings};
use crate::error::{read, usage, CliError, Result, ASSERTION, PASS, PRECONDITION};
use crate::instance::InstanceSpec;
use crate::report::{emit, Report};

#[derive(Parser)]
#[command(name = "chaining", version, about = "Chaining constructions and their checks on finite instances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance as instance.json (and instance.csv for point sets).
    Generate {
        /// random-cloud:dim=,card=,radius=,sparsity= | ellipsoid:a1,a2,.. | basis:n |
        /// group:cyclic=n|dihedral=n,f_seed= | function-class:l_max=,count= | file:path
        #[arg(value_parser = parse_spec)]
        instance: InstanceSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a pipeline on an instance and report every check.
    Run {
        #[arg(value_enum)]
        pipeline: Pipeline,
        #[arg(value_parser = parse_spec)]
        instance: InstanceSpec,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run a battery of acceptance criteria: acceptance, smoke or empty.
    Suite {
        battery: String,
        #[arg(long, default_value_t = 20_240_601)]
        seed: u64,
        /// Restrict to these criterion ids.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a serialized tree, measure or decomposition.
    Verify {
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Any other setting, as key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Config file with [run] and per-pipeline sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json, the .tsv series and artifacts; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("samples", self.samples.map(|v| v.to_string()));
        push("r", self.r.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("p", self.p.map(|v| v.to_string()));
        push("tau", self.tau.map(|v| v.to_string()));
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set {kv}: expected key=value")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn parse_spec(s: &str) -> std::result::Result<InstanceSpec, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn cap_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CHAINING_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("CHAINING_THREADS = {raw}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot size the worker pool: {e}")))
}

fn finish(report: &Report) -> ExitCode {
    for f in &report.failures {
        let values = match (f.lhs, f.rhs) {
            (Some(l), Some(r)) => format!(" ({l} > {r})"),
            _ => String::new(),
        };
        eprintln!("FAIL {}{values} {}", f.check, f.detail);
    }
    ExitCode::from(if report.passed { PASS } else { ASSERTION })
}

fn run(cli: Cli) -> Result<ExitCode> {
    cap_threads()?;
    match cli.command {
        Command::Generate { instance, seed, out } => {
            for path in instance.generate(seed)?.save(&out)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::from(PASS))
        }
        Command::Run { pipeline, instance, flags } => {
            let file = match &flags.config {
                Some(path) => Some(ConfigFile::parse(&read(path)?)?),
                None => None,
            };
            let settings = Settings::resolve(pipeline, file.as_ref(), &flags.overrides()?)?;
            let inst = instance.generate(settings.seed())?;
            let outcome = pipelines::run(pipeline, &inst, &settings)?;
            let report = Report {
                command: "run",
                target: pipeline.name().to_string(),
                instance: Some(instance.to_string()),
                settings: Some(settings),
                passed: outcome.verdict.failures.is_empty(),
                checks_evaluated: outcome.verdict.evaluated,
                failures: outcome.verdict.failures,
                unasserted: outcome.unasserted,
                results: outcome.results,
            };
            emit(&report, &outcome.series, &outcome.artifacts, flags.out.as_deref())?;
            Ok(finish(&report))
        }
        Command::Suite {
            battery,
            seed,
            criteria,
            out,
        } => {
            let summary = suite::run_suite(&battery, seed, &criteria)?;
            let json = serde_json::to_string_pretty(&summary)? + "\n";
            match &out {
                Some(dir) => {
                    error::write(&dir.join("summary.json"), &json)?;
                    for s in summary.series() {
                        error::write(&dir.join(format!("{}.tsv", s.name)), &s.tsv())?;
                    }
                }
                None => print!("{json}"),
            }
            for c in &summary.criteria {
                let status = if c.passed { "PASS" } else { "FAIL" };
                eprintln!("criterion {:>2} {status} {}", c.id, c.name);
                for f in c.failures.iter().take(10) {
                    eprintln!("    {f}");
                }
            }
            Ok(ExitCode::from(if summary.passed { PASS } else { ASSERTION }))
        }
        Command::Verify { bundle, out } => {
            let text = read(&bundle)?;
            let parsed: Bundle = serde_json::from_str(&text)?;
            let (verdict, results) = parsed.verify()?;
            let report = Report {
                command: "verify",
                target: parsed.kind().to_string(),
                instance: Some(bundle.display().to_string()),
                settings: None,
                passed: verdict.failures.is_empty(),
                checks_evaluated: verdict.evaluated,
                failures: verdict.failures,
                unasserted: Vec::new(),
                results,
            };
            emit(&report, &[], &[], out.as_deref())?;
            Ok(finish(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(PRECONDITION) } else { ExitCode::SUCCESS };
        }
    };
    run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
