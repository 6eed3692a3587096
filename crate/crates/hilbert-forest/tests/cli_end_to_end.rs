//! End-to-end runs of the `hilbert-forest` binary over real files.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hilbert-forest"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.hfvc");
    let queries = dir.path().join("queries.hfvc");
    let truth = dir.path().join("truth.hfrs");
    let index = dir.path().join("index.hfix");
    let results = dir.path().join("results.hfrs");
    let report = dir.path().join("runs.jsonl");

    run_ok(&[
        "gen-data",
        "--count", "2000",
        "--dim", "8",
        "--kind", "gaussian-mixture",
        "--clusters", "50",
        "--spread", "0.02",
        "--seed", "7",
        "--out", p(&data),
        "--queries-out", p(&queries),
        "--query-count", "40",
    ]);
    run_ok(&[
        "ground-truth",
        "--data", p(&data),
        "--queries", p(&queries),
        "--k", "30",
        "--out", p(&truth),
    ]);
    run_ok(&[
        "build-index",
        "--data", p(&data),
        "--n-trees", "4",
        "--leaf-size", "50",
        "--seed", "7",
        "--out", p(&index),
    ]);

    // Exhaustive parameters with exact re-ranking reproduce the ground truth.
    let out = run_ok(&[
        "search",
        "--index", p(&index),
        "--data", p(&data),
        "--queries", p(&queries),
        "--k1", "2000",
        "--k2", "2000",
        "--h", "0",
        "--k", "30",
        "--exact-final",
        "--out", p(&results),
        "--truth", p(&truth),
        "--report", p(&report),
    ]);
    assert!(out.contains("recall@30: 1.0000"), "stdout: {out}");

    let eval_out = run_ok(&[
        "eval",
        "--results", p(&results),
        "--truth", p(&truth),
        "--k", "30",
    ]);
    assert!(eval_out.contains("recall@30: 1.0000"), "stdout: {eval_out}");

    // The report file carries one parseable JSON line.
    let report_text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = report_text.lines().collect();
    assert_eq!(lines.len(), 1);
    let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(parsed["recall"], 1.0);
    assert_eq!(parsed["task"], "search");
}

#[test]
fn graph_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.hfvc");
    let truth = dir.path().join("truth.hfgr");
    let graph_file = dir.path().join("graph.hfgr");

    run_ok(&[
        "gen-data",
        "--count", "1200",
        "--dim", "8",
        "--clusters", "40",
        "--seed", "11",
        "--out", p(&data),
    ]);
    run_ok(&[
        "ground-truth",
        "--data", p(&data),
        "--graph-out", p(&truth),
        "--k-out", "10",
    ]);
    let out = run_ok(&[
        "build-graph",
        "--data", p(&data),
        "--n-sorts", "2",
        "--k1", "1200",
        "--k2", "1200",
        "--k-out", "10",
        "--seed", "11",
        "--out", p(&graph_file),
        "--truth-graph", p(&truth),
    ]);
    assert!(out.contains("graph recall@10: 1.0000"), "stdout: {out}");

    let eval_out = run_ok(&[
        "eval",
        "--graph", p(&graph_file),
        "--truth-graph", p(&truth),
    ]);
    assert!(eval_out.contains("graph recall@10: 1.0000"), "stdout: {eval_out}");
}

#[test]
fn sweep_zips_parameter_lists() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.hfvc");
    let queries = dir.path().join("queries.hfvc");
    let truth = dir.path().join("truth.hfrs");
    let index = dir.path().join("index.hfix");
    let report = dir.path().join("sweep.jsonl");

    run_ok(&[
        "gen-data", "--count", "1500", "--dim", "8", "--clusters", "50",
        "--seed", "3", "--out", p(&data),
        "--queries-out", p(&queries), "--query-count", "25",
    ]);
    run_ok(&[
        "ground-truth", "--data", p(&data), "--queries", p(&queries),
        "--k", "10", "--out", p(&truth),
    ]);
    run_ok(&[
        "build-index", "--data", p(&data), "--n-trees", "4",
        "--leaf-size", "50", "--seed", "3", "--out", p(&index),
    ]);
    let out = run_ok(&[
        "sweep",
        "--task", "search",
        "--data", p(&data),
        "--index", p(&index),
        "--queries", p(&queries),
        "--truth", p(&truth),
        "--n", "4",
        "--k1", "40,80,160",
        "--k2", "30,60,120",
        "--h", "1",
        "--k", "10",
        "--report", p(&report),
    ]);
    assert_eq!(out.matches("recall@10=").count(), 3, "stdout: {out}");

    let report_text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(report_text.lines().count(), 3);
    for line in report_text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["n"], 4);
    }
}

#[test]
fn invalid_parameters_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.hfvc");
    let queries = dir.path().join("q.hfvc");
    let index = dir.path().join("i.hfix");
    run_ok(&[
        "gen-data", "--count", "100", "--dim", "4", "--seed", "1",
        "--out", p(&data), "--queries-out", p(&queries), "--query-count", "5",
    ]);
    run_ok(&[
        "build-index", "--data", p(&data), "--n-trees", "2",
        "--leaf-size", "10", "--seed", "1", "--out", p(&index),
    ]);

    let out = bin()
        .args([
            "search",
            "--index", p(&index),
            "--data", p(&data),
            "--queries", p(&queries),
            "--k1", "0",
            "--k2", "10",
            "--k", "5",
            "--out", p(&dir.path().join("r.hfrs")),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k1"), "stderr should name k1: {stderr}");

    // Unknown flags are also named.
    let out = bin().args(["search", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--bogus"), "stderr: {stderr}");

    // Missing files produce a single-line diagnostic naming the path.
    let out = bin()
        .args(["build-index", "--data", "/no/such/file.hfvc", "--n-trees", "1", "--out", "/tmp/x.hfix"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/file.hfvc"), "stderr: {stderr}");
    assert_eq!(stderr.trim().lines().count(), 1, "stderr: {stderr}");
}

#[test]
fn help_lists_all_subcommands() {
    let out = run_ok(&["--help"]);
    for sub in [
        "gen-data",
        "build-index",
        "search",
        "build-graph",
        "ground-truth",
        "eval",
        "sweep",
    ] {
        assert!(out.contains(sub), "--help missing {sub}: {out}");
    }
}
