use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn calderon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calderon"))
        .args(args)
        .env_remove("CALDERON_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn records(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("json line"))
        .collect()
}

fn metric<'a>(rs: &'a [Value], name: &str) -> Vec<&'a Value> {
    rs.iter().filter(|r| r["metric"] == name).collect()
}

#[test]
fn gap_profile_is_identically_one() {
    let out = calderon(&["gap", "--d", "1", "--p0", "1", "--p1", "2", "--s0", "0", "--s1", "0", "--theta", "0.5", "--J", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let rs = records(&out);
    let profile = metric(&rs, "cutoff_residual");
    assert_eq!(profile.len(), 8);
    for r in profile {
        assert!((r["value"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    }
    for m in ["norm_b_s0_p0_inf", "norm_b_s1_p1_inf", "norm_b_s_p_inf"] {
        assert!((metric(&rs, m)[0]["value"].as_f64().unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn empty_sequence_has_norm_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.seq");
    fs::write(&path, "window 1 4 1\n").unwrap();
    let out = calderon(&["norm", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rs = records(&out);
    assert_eq!(rs.len(), 1);
    assert_eq!(rs[0]["value"].as_f64(), Some(0.0));
}

#[test]
fn quick_suite_passes() {
    let out = calderon(&["suite", "--seed", "7", "--quick"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(0), "{err}");
    assert_eq!(err.lines().filter(|l| l.starts_with("PASS criterion")).count(), 10);
}

#[test]
fn out_dir_receives_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = calderon(&["--out", dir.path().to_str().unwrap(), "factorize-b", "--batch", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let jsonl = fs::read_to_string(dir.path().join("factorize-b.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 6);
    let csv = fs::read_to_string(dir.path().join("factorize-b.summary.csv")).unwrap();
    assert!(csv.starts_with("experiment,metric,count,failures,min,max"));
}

#[test]
fn seeded_runs_repeat() {
    let a = calderon(&["--seed", "11", "factorize-f", "--batch", "4"]);
    let b = calderon(&["--seed", "11", "factorize-f", "--batch", "4"]);
    let c = calderon(&["--seed", "12", "factorize-f", "--batch", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "command = gap\nJ = 5\n# comment\ntheta = 0.25\n");
    let from_config = records(&calderon(&["--config", &cfg]));
    assert_eq!(metric(&from_config, "cutoff_residual").len(), 5);
    assert_eq!(from_config[0]["params"]["theta"].as_f64(), Some(0.25));
    let overridden = records(&calderon(&["--config", &cfg, "gap", "--J", "6"]));
    assert_eq!(metric(&overridden, "cutoff_residual").len(), 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "this line has no separator\n");
    assert_eq!(calderon(&["--config", &bad, "gap"]).status.code(), Some(2));
    assert_eq!(calderon(&["norm", "--p", "0"]).status.code(), Some(2));
    assert_eq!(calderon(&["wclass", "--floor", "10"]).status.code(), Some(1));
    assert_eq!(calderon(&["apconst", "--weight", "exp:1", "--global", "--expect", "bounded"]).status.code(), Some(1));
    assert_eq!(calderon(&["--help"]).status.code(), Some(0));
}
