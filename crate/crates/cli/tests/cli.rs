use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn elosearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elosearch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = elosearch(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_run_replay_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    ok(&[
        "generate",
        "--tier",
        "easy",
        "--tasks",
        "3",
        "--seed",
        "4",
        "--out",
        p(&world),
    ]);

    let runs = dir.path().join("runs");
    for method in ["judec", "dfsdt"] {
        ok(&[
            "run",
            "--env",
            p(&world),
            "--task",
            "1",
            "--method",
            method,
            "--seed",
            "2",
            "--out",
            p(&runs),
        ]);
    }
    let mut records: Vec<_> = std::fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    records.sort();
    // The score-guided run also stores its random-pick twin.
    assert_eq!(records.len(), 3);

    let mut args = vec!["replay"];
    args.extend(records.iter().map(|r| p(r)));
    ok(&args);
    let tree = ok(&["inspect", p(&records[0]), "--max-depth", "2"]);
    assert!(tree.contains("#0"));
}

#[test]
fn suite_writes_metrics_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    ok(&[
        "generate",
        "--tier",
        "easy",
        "--tasks",
        "2",
        "--seed",
        "1",
        "--out",
        p(&world),
    ]);
    let out = dir.path().join("out");
    ok(&[
        "suite",
        "--env",
        p(&world),
        "--methods",
        "judec,cot",
        "--budget",
        "30,60",
        "--seeds",
        "2",
        "--out",
        p(&out),
    ]);
    for file in [
        "metrics.json",
        "pass_rates.csv",
        "preference_ranks.csv",
        "elo_buckets.csv",
        "taxonomy.csv",
        "cells.jsonl",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let csv = std::fs::read_to_string(out.join("pass_rates.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("method,budget,runs,passed,pass_rate"));
    // Two reported score-guided variants plus CoT, two budgets each.
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn errors_are_json_with_exit_code_two() {
    let out = elosearch(&[
        "run",
        "--env",
        "/nonexistent/world.json",
        "--task",
        "0",
        "--method",
        "cot",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    assert_eq!(err["error"]["kind"], "io");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("/nonexistent/world.json"));
}
