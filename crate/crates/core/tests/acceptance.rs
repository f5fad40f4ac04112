//! Runs the ten acceptance criteria at full scale, one line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use chaining::battery::{run_criterion, Scale, CRITERIA};

const SEED: u64 = 20_240_601;

fn main() -> ExitCode {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let secs = || start.elapsed().as_secs_f64();
        match run_criterion(id, SEED, Scale::Full) {
            Ok(rep) => {
                let consts: Vec<String> = rep.constants.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                let verdict = if rep.passed { "PASS" } else { "FAIL" };
                println!(
                    "criterion {id:>2} {verdict} {name} [{} instances, {:.1}s] {}",
                    rep.instances,
                    secs(),
                    consts.join(" ")
                );
                for f in rep.failures.iter().take(10) {
                    println!("    {f}");
                }
                if !rep.passed {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL {name} [error after {:.1}s] {e}", secs());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
