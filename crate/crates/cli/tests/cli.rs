use std::path::Path;
use std::process::{Command, Output};

use chaining::mc::GroupTable;
use serde_json::Value;

fn chaining(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chaining")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn basis_two_is_the_standard_basis() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaining(&["generate", "basis:2", "--out", path_arg(dir.path())]);
    assert_eq!(code(&out), 0);
    let inst = json(&dir.path().join("instance.json"));
    assert_eq!(inst["kind"], "points");
    assert_eq!(inst["points"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
    let csv = std::fs::read_to_string(dir.path().join("instance.csv")).unwrap();
    assert_eq!(csv.trim(), "1.0,0.0\n0.0,1.0");
}

#[test]
fn generated_group_tables_are_groups() {
    for (spec, order) in [("group:cyclic=2,f_seed=5", 2), ("group:dihedral=3,f_seed=1", 6)] {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(code(&chaining(&["generate", spec, "--out", path_arg(dir.path())])), 0);
        let inst = json(&dir.path().join("instance.json"));
        let table: Vec<Vec<usize>> = serde_json::from_value(inst["table"].clone()).unwrap();
        let g = GroupTable::new(table.clone()).expect("valid Cayley table");
        assert_eq!(g.order(), order);
        if order == 2 {
            assert_eq!(table, vec![vec![0, 1], vec![1, 0]]);
        }
        let f: Vec<f64> = serde_json::from_value(inst["f"].clone()).unwrap();
        assert_eq!(f.len(), order);
        assert!(f.iter().all(|v| v.abs() <= 1.0));
    }
}

#[test]
fn random_cloud_stays_in_its_ball() {
    let dir = tempfile::tempdir().unwrap();
    let spec = "random-cloud:dim=8,card=64,radius=1";
    assert_eq!(code(&chaining(&["generate", spec, "--seed", "11", "--out", path_arg(dir.path())])), 0);
    let pts: Vec<Vec<f64>> = serde_json::from_value(json(&dir.path().join("instance.json"))["points"].clone()).unwrap();
    assert_eq!(pts.len(), 64);
    for p in &pts {
        assert_eq!(p.len(), 8);
        assert!(p.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0);
    }
    // Same seed, same file.
    let again = tempfile::tempdir().unwrap();
    chaining(&["generate", spec, "--seed", "11", "--out", path_arg(again.path())]);
    assert_eq!(
        std::fs::read(dir.path().join("instance.json")).unwrap(),
        std::fs::read(again.path().join("instance.json")).unwrap()
    );
}

#[test]
fn mmt_on_two_basis_vectors_pins_the_gaussian_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaining(&["run", "mmt", "basis:2", "--samples", "100000", "--seed", "3", "--out", path_arg(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("report.json"));
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["settings"]["samples"], "100000");
    assert_eq!(rep["settings"]["k_theta"], "4");
    let g = &rep["results"]["g_hat"];
    let (mean, se) = (g["mean"].as_f64().unwrap(), g["std_err"].as_f64().unwrap());
    let exact = 1.0 / std::f64::consts::PI.sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} ± {se}");
    for f in ["tree.json", "measure.json", "chain_sum.tsv", "gamma_over_g.tsv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let tsv = std::fs::read_to_string(dir.path().join("chain_sum.tsv")).unwrap();
    assert_eq!(tsv.lines().next(), Some("point\tchain_sum_over_bound"));
    assert_eq!(tsv.lines().count(), 3);
}

#[test]
fn one_dimensional_convex_pipeline_passes() {
    let out = chaining(&["run", "convex", "ellipsoid:1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["settings"]["r"], "8");
}

#[test]
fn tampered_tree_fails_the_chain_sum_bound() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&chaining(&["run", "mmt", "basis:2", "--out", path_arg(dir.path())])), 0);
    let tree_path = dir.path().join("tree.json");
    assert_eq!(code(&chaining(&["verify", path_arg(&tree_path)])), 0);

    let mut bundle = json(&tree_path);
    let levels = bundle["tree"]["levels"].as_array_mut().unwrap();
    let cells = levels.last_mut().unwrap()["cells"].as_array_mut().unwrap();
    cells.last_mut().unwrap()["ell"] = 1_000_000.into();
    let bad = dir.path().join("tampered.json");
    std::fs::write(&bad, bundle.to_string()).unwrap();
    let out = chaining(&["verify", path_arg(&bad)]);
    assert_eq!(code(&out), 2);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["passed"], false);
    assert!(rep["failures"].as_array().unwrap().iter().any(|f| f["check"] == "chain-sum bound"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL chain-sum bound"));
}

#[test]
fn measure_and_decomposition_bundles_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = path_arg(dir.path());
    assert_eq!(code(&chaining(&["run", "splits", "random-cloud:dim=5,card=12", "--seed", "2", "--out", d])), 0);
    for f in ["l1-split.json", "weak-split.json"] {
        assert_eq!(code(&chaining(&["verify", path_arg(&dir.path().join(f))])), 0, "{f}");
    }
    let mut bundle = json(&dir.path().join("l1-split.json"));
    bundle["u"][0][0] = (bundle["u"][0][0].as_f64().unwrap() + 0.5).into();
    let bad = dir.path().join("bad-split.json");
    std::fs::write(&bad, bundle.to_string()).unwrap();
    let out = chaining(&["verify", path_arg(&bad)]);
    assert_eq!(code(&out), 2);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["failures"].as_array().unwrap().iter().any(|f| f["check"] == "decomposition sum"));

    let m = tempfile::tempdir().unwrap();
    assert_eq!(code(&chaining(&["run", "mmt", "basis:3", "--out", path_arg(m.path())])), 0);
    let measure = m.path().join("measure.json");
    assert_eq!(code(&chaining(&["verify", path_arg(&measure)])), 0);
    let mut bundle = json(&measure);
    bundle["atoms"][0][1] = (bundle["atoms"][0][1].as_f64().unwrap() * 0.5).into();
    std::fs::write(&measure, bundle.to_string()).unwrap();
    assert_eq!(code(&chaining(&["verify", path_arg(&measure)])), 2);
}

#[test]
fn every_pipeline_runs_on_a_small_instance() {
    for (pipeline, spec) in [
        ("weak-lp", "random-cloud:dim=6,card=10"),
        ("group-check", "group:cyclic=5,f_seed=2"),
        ("subset-extract", "random-cloud:dim=4,card=60"),
        ("function-class", "function-class:l_max=4,count=4"),
        ("comparisons", "random-cloud:dim=4,card=8"),
    ] {
        let mut args = vec!["run", pipeline, spec, "--seed", "1"];
        if pipeline != "function-class" {
            args.extend(["--samples", "400"]);
        }
        let out = chaining(&args);
        assert_eq!(code(&out), 0, "{pipeline}: {}", String::from_utf8_lossy(&out.stderr));
        let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(rep["target"], pipeline);
    }
}

#[test]
fn rejected_inputs_exit_with_three() {
    let cases: [&[&str]; 5] = [
        &["run", "convex", "basis:2"],
        &["run", "mmt", "basis:2", "--alpha", "1"],
        &["run", "splits", "basis:2", "--p", "2.5"],
        &["run", "mmt", "basis:0"],
        &["run", "mmt", "basis:2", "--r", "2"],
    ];
    for args in cases {
        assert_eq!(code(&chaining(args)), 3, "{args:?}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_chaining"))
        .args(["suite", "empty"])
        .env("CHAINING_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 3);
}

#[test]
fn config_sections_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "[run]\nseed = 9\nsamples = 700\n\n[mmt]\nk_theta = 2 # stricter growth\n[convex]\nbudget = 10\n").unwrap();
    let out = chaining(&["run", "mmt", "basis:2", "--config", path_arg(&cfg), "--samples", "800"]);
    assert_eq!(code(&out), 0);
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["settings"]["seed"], "9");
    assert_eq!(rep["settings"]["samples"], "800");
    assert_eq!(rep["settings"]["k_theta"], "2");
    assert_eq!(rep["results"]["g_hat"]["n_samples"], 800);
}

#[test]
fn runs_are_deterministic() {
    let a = chaining(&["run", "comparisons", "random-cloud:dim=3,card=6", "--seed", "4", "--samples", "500"]);
    let b = chaining(&["run", "comparisons", "random-cloud:dim=3,card=6", "--seed", "4", "--samples", "500"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn suite_summaries_are_byte_identical() {
    let a = chaining(&["suite", "smoke", "--criteria", "1,3,6,8"]);
    let b = chaining(&["suite", "smoke", "--criteria", "1,3,6,8"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let summary: Value = serde_json::from_slice(&a.stdout).unwrap();
    let ids: Vec<u64> = summary["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 3, 6, 8]);
}

#[test]
fn empty_suite_is_an_empty_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = chaining(&["suite", "empty", "--out", path_arg(dir.path())]);
    assert_eq!(code(&out), 0);
    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["criteria"], serde_json::json!([]));
    assert_eq!(code(&chaining(&["suite", "nonesuch"])), 3);
}
