use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddsafe"))
}

fn sec_v() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/secV.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn edited_scenario(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(sec_v()).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn missing_scenario_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        "/nonexistent/scenario.json",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn zero_offset_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = edited_scenario(tmp.path(), |v| v["safe_set"]["g"][2] = 0.0.into());
    let out = run(&[
        "collect",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("safe_set.g"));
}

#[test]
fn report_is_verified_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let scenario = sec_v();
    for dir in [&a, &b] {
        let out = run(&[
            "report",
            scenario.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let (fa, fb) = (files(&a), files(&b));
    assert!(!fa.is_empty());
    assert_eq!(fa.len(), fb.len());
    for ((pa, ca), (pb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(pa, pb);
        assert!(ca == cb, "{} differs between runs", pa.display());
    }
    let summary: Value =
        serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 0);
    assert_eq!(summary["details"]["status"], "verified");
}

#[test]
fn closed_loop_data_is_rank_deficient_for_the_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let path = edited_scenario(tmp.path(), |v| {
        v["data"]["x0"] = serde_json::json!([0.5, 0.3]);
        v["data"]["require_in_set"] = false.into();
        v["data"]["closed_loop"] = serde_json::json!({"K1": [[0.4, -0.9]], "K2": [[-1.0, -1.0]]});
    });
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "sweep-lambda",
        path.to_str().unwrap(),
        "--method",
        "thm1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank deficient"));
    let summary: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 2);
}

#[test]
fn collect_writes_data_and_rank() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "collect",
        "--scenario",
        sec_v().to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for f in [
        "data/X0.csv",
        "data/X1.csv",
        "data/U0.csv",
        "data/V0.csv",
        "rank.json",
        "summary.json",
    ] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn lambda_override_below_minimum_is_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "synth",
        sec_v().to_str().unwrap(),
        "--lambda",
        "0.5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
