use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn egg_bergman(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egg-bergman"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_dir(dir: &Path) -> String {
    dir.join("out").display().to_string()
}

#[test]
fn passing_verify_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(dir.path());
    let res = egg_bergman(&["verify", "decomposition", "multiplier", "--family", "4", "--out", &out]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(dir.path().join("out/report.jsonl")).unwrap();
    let rows: Vec<Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["pass"] == true));
    assert!(rows.iter().all(|r| r["suite"] == "decomposition" || r["suite"] == "multiplier"));
    let summary = fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    assert!(summary.starts_with("suite,check,estimate,tolerance,pass\n"));
    assert_eq!(summary.lines().count(), rows.len() + 1);
    assert!(String::from_utf8_lossy(&res.stdout).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn failing_check_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(dir.path());
    let res = egg_bergman(&["verify", "parseval", "--samples", "10", "--out", &out]);
    assert_eq!(res.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("failing checks:") && stderr.contains("parseval/"), "{stderr}");
    // reports are still written for a failing run
    assert!(dir.path().join("out/report.jsonl").exists());
}

#[test]
fn invalid_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(dir.path());
    for args in [
        vec!["verify", "--a", "-1"],
        vec!["verify", "--a", "2.5"],
        vec!["verify", "gamma", "--grid", "10"],
        vec!["verify", "--h-floor", "0.5"],
        vec!["verify", "no-such-suite"],
    ] {
        let mut args = args.clone();
        args.extend(["--out", &out]);
        let res = egg_bergman(&args);
        assert_eq!(res.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&res.stderr).contains("invalid configuration"));
    }
    assert!(!dir.path().join("out").exists(), "nothing is written for an invalid configuration");
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_dir(dir.path());
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# flat key = value lines\na = 0.5\nfamily = 2\ngrid = 10\n").unwrap();
    let res = egg_bergman(&["verify", "decomposition", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(res.status.code(), Some(2), "grid = 10 from the file is rejected");
    let res = egg_bergman(&[
        "verify",
        "decomposition",
        "--config",
        cfg.to_str().unwrap(),
        "--grid",
        "1000",
        "--out",
        &out,
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(dir.path().join("out/report.jsonl")).unwrap();
    let first: Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(first["params"]["a"], 0.5);
}

#[test]
fn solve_writes_and_reuses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().display().to_string();
    let args = ["solve", "--n", "1", "--m", "1", "--a", "0.5", "--sigma", "1", "--cache-dir", &cache];
    let first = egg_bergman(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let file = dir.path().join("kernel-n1-m1-a0.5-sigma1.txt");
    let stored = fs::read_to_string(&file).unwrap();
    let second = egg_bergman(&args);
    assert_eq!(second.stdout, first.stdout);
    assert_eq!(fs::read_to_string(&file).unwrap(), stored);
}

#[test]
fn corrupt_cache_is_recomputed_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().display().to_string();
    let args = ["solve", "--a", "2", "--sigma", "0", "--cache-dir", &cache];
    let clean = egg_bergman(&args);
    assert_eq!(clean.status.code(), Some(0));
    let file = dir.path().join("kernel-n1-m1-a2-sigma0.txt");
    fs::write(&file, "not a kernel record\n").unwrap();
    let repaired = egg_bergman(&args);
    assert_eq!(repaired.status.code(), Some(0));
    assert_eq!(repaired.stdout, clean.stdout);
    assert!(String::from_utf8_lossy(&repaired.stderr).to_lowercase().contains("warn"));
    assert_eq!(fs::read(&file).unwrap(), clean.stdout);
}

#[test]
fn solve_rejects_bad_parameters() {
    let res = egg_bergman(&["solve", "--a", "0"]);
    assert_eq!(res.status.code(), Some(2));
    let res = egg_bergman(&["solve", "--sigma", "-3"]);
    assert_eq!(res.status.code(), Some(2));
}
