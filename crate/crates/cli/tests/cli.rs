use std::path::Path;
use std::process::{Command, Output};

fn splitfolio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitfolio")).args(args).env("SPLITFOLIO_THREADS", "2").output().unwrap()
}

fn run_ok(args: &[&str]) -> String {
    let out = splitfolio(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_synth_config(dir: &Path) -> String {
    let path = dir.join("synth.json");
    let cfg = serde_json::json!({
        "blocks": [{ "size": 20, "rho": 0.8 }, { "size": 20, "rho": 0.8 }],
        "weeks": 150,
        "seed": 42
    });
    std::fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_chain_flags_cluster_spread() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = write_synth_config(dir.path());
    run_ok(&["synth", "--config", &cfg, "--out", out]);
    run_ok(&["ingest", "--out", out]);
    run_ok(&["distances", "--period", "1", "--out", out]);
    let listed = run_ok(&["nnet", "--period", "1", "--out", out]);
    assert!(listed.contains("splits_p1.nex"));
    run_ok(&["graph", "--period", "1", "--out", out]);
    run_ok(&["clusters-suggest", "--period", "1", "--k", "2", "--out", out]);
    let clusters = dir.path().join("clusters_p1.json");
    let valid = run_ok(&["clusters-validate", clusters.to_str().unwrap(), "--splits", dir.path().join("splits_p1.json").to_str().unwrap()]);
    assert!(valid.starts_with("valid:"));
    run_ok(&["simulate", "--period", "2", "--seed", "7", "--replications", "500", "--sizes", "2", "--strategies", "random,cluster,industry", "--out", out]);
    run_ok(&["report", "--out", out]);

    let csv = std::fs::read_to_string(dir.path().join("report_p2.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header, ["period", "size", "statistic", "random", "cluster", "industry"]);
    let std_row = csv.lines().find(|l| l.contains("Std. Dev.")).unwrap();
    let cells: Vec<&str> = std_row.split(',').collect();
    let value = |c: &str| c.trim_end_matches('*').parse::<f64>().unwrap();
    assert!(value(cells[4]) < value(cells[3]), "{std_row}");
    assert!(cells[4].ends_with('*') || cells[5].ends_with('*'), "{std_row}");
    assert!(dir.path().join("report.txt").exists());
    assert!(dir.path().join("scatter_p2_cluster_2.csv").exists());
}

#[test]
fn bad_reduction_weights_exit_2() {
    let out = splitfolio(&["nnet", "--alpha", "0.3", "--beta", "0.3", "--gamma", "0.5", "--out", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("splitfolio:"));
}

#[test]
fn split_cluster_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let ordering = ["A_F", "B_F", "C_M", "D_M", "E_F", "F_M"];
    let hash = splitfolio::clustering::ordering_hash(&ordering.map(String::from));
    let doc = serde_json::json!({
        "schema": "splitfolio.clusters/1",
        "ordering_hash": hash,
        "ordering": ordering,
        "boundaries": [0, 2, 4],
        "labels": [1, 2, 1]
    });
    let path = dir.path().join("clusters.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = splitfolio(&["clusters-validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cluster 1 occupies more than one arc"), "{err}");
}

#[test]
fn missing_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = splitfolio(&["distances", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_without_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = splitfolio(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}
