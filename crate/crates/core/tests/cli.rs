//! End-to-end checks of the `bincap` binary: exit statuses, output schemas
//! and the solve/verify round trip.

use std::path::Path;
use std::process::{Command, Output};

fn bincap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bincap")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn solve_prints_report_and_exits_zero() {
    let out = bincap(&["solve", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["n"], 3);
    assert!((v["capacity_nats"].as_f64().unwrap() - (19.0f64 / 8.0).ln()).abs() < 1e-9);
    assert_eq!(v["support"].as_array().unwrap().len(), 3);
    assert_eq!(v["output_pmf"].as_array().unwrap().len(), 4);
    assert_eq!(v["converged"], true);
}

#[test]
fn invalid_input_exits_two() {
    assert_eq!(bincap(&["solve", "--n", "0"]).status.code(), Some(2));
    assert_eq!(bincap(&["solve", "--n", "5000"]).status.code(), Some(2));
    assert_eq!(bincap(&["solve"]).status.code(), Some(2));
    assert_eq!(bincap(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(bincap(&["solve", "--n", "4", "--grid-size", "100"]).status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = bincap(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("solve"));
}

#[test]
fn iteration_cap_exits_three() {
    let out = bincap(&["solve", "--n", "256", "--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["converged"], false);
}

#[test]
fn unwritable_output_exits_one() {
    let out = bincap(&["table", "--output", "/nonexistent-dir/sub/table.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_round_trip_reproduces_slack() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solution.json");
    let path_str = path.to_str().unwrap();
    let solved = bincap(&["solve", "--n", "12", "--output", path_str]);
    assert_eq!(solved.status.code(), Some(0));
    assert!(solved.stdout.is_empty());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();

    let verified = bincap(&["verify", "--dist", path_str, "--n", "12"]);
    assert_eq!(verified.status.code(), Some(0));
    let summary = json(&verified);
    let a = report["kkt_slack"].as_f64().unwrap();
    let b = summary["kkt_slack"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    assert!((summary["capacity_nats"].as_f64().unwrap() - report["capacity_nats"].as_f64().unwrap()).abs() <= 1e-12);
    assert_eq!(summary["all_flags_pass"], true);
}

#[test]
fn verify_rejects_malformed_laws() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"points": [0.0, 1.0], "weights": [0.5, 0.6]}"#).unwrap();
    assert_eq!(bincap(&["verify", "--dist", bad.to_str().unwrap(), "--n", "2"]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_ne!(bincap(&["verify", "--dist", missing.to_str().unwrap(), "--n", "2"]).status.code(), Some(0));
}

#[test]
fn verify_accepts_points_alias_and_reports_suboptimal_laws() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("uniform.json");
    std::fs::write(&file, r#"{"points": [0.0, 0.5, 1.0], "weights": [0.25, 0.5, 0.25]}"#).unwrap();
    let out = bincap(&["verify", "--dist", file.to_str().unwrap(), "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["kkt_slack"].as_f64().unwrap() > 1e-3);
    assert_eq!(v["all_flags_pass"], false);
}

#[test]
fn output_dir_env_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bincap"))
        .args(["bounds", "--n", "10", "--output", "bounds.json"])
        .env("BINCAP_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let written = dir.path().join("bounds.json");
    assert!(Path::new(&written).exists());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(written).unwrap()).unwrap();
    assert_eq!(v["n"], 10);
    assert!(v["cap_lower"].as_f64().unwrap() <= v["cap_upper"].as_f64().unwrap());
}

#[test]
fn table_lists_three_exact_solutions() {
    let out = bincap(&["table"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!((rows[1]["capacity_nats"].as_f64().unwrap() - (17.0f64 / 8.0).ln()).abs() < 1e-15);
}

#[test]
fn csv_commands_have_headers() {
    let cases: [(&[&str], &str); 4] = [
        (
            &["sweep", "--n-max", "6", "--solve-max", "4"],
            "n,cap_lower,capacity,cap_upper,card_lower,support_size,card_upper,kkt_slack",
        ),
        (&["curves", "--n", "4", "--points", "11"], "x,i,d1,d2"),
        (&["curves", "--n", "4", "--points", "11", "--crest"], "x,lb1,lb2"),
        (&["entropy-bounds", "--n", "4", "--points", "11"], "x,lower,exact,upper"),
    ];
    for (args, header) in cases {
        let out = bincap(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{args:?}");
    }
}

#[test]
fn sweep_leaves_unsolved_cells_empty() {
    let out = bincap(&["sweep", "--n-max", "5", "--solve-max", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert!(!rows[2][2].is_empty());
    assert!(rows[4][2].is_empty());
}
