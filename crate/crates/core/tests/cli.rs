//! Exit-code and file-format contract tests for the `distilab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distilab"))
        .args(args)
        .output()
        .expect("failed to spawn distilab")
}

fn path(dir: &Path, s: &str) -> String {
    dir.join(s).to_string_lossy().into_owned()
}

#[test]
fn contexts_zero_train_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "contexts", "--env", "fourrooms", "--seed", "7", "--train", "0", "--val", "8",
        "--test", "20", "--out", &path(tmp.path(), "ctx"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn contexts_writes_three_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "contexts", "--env", "fourrooms", "--seed", "7", "--train", "5", "--val", "2",
        "--test", "5", "--size", "9", "--out", &path(tmp.path(), "ctx"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for f in ["train.json", "val.json", "test.json"] {
        assert!(tmp.path().join("ctx").join(f).exists(), "{f} missing");
    }
}

#[test]
fn collect_kind_env_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&[
            "contexts", "--env", "fourrooms", "--seed", "7", "--train", "2", "--val", "1",
            "--test", "2", "--size", "9", "--out", &path(tmp.path(), "ctx"),
        ])
        .status
        .code(),
        Some(0)
    );
    let out = run(&[
        "collect", "--env", "fourrooms", "--contexts", &path(tmp.path(), "ctx/train.json"),
        "--kind", "plus-c4", "--size", "100", "--seed", "0",
        "--out", &path(tmp.path(), "d.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn distill_missing_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "distill", "--data", &path(tmp.path(), "missing.jsonl"), "--loss", "mse-vector",
        "--epochs", "1", "--batch", "8", "--lr", "1e-3", "--seeds", "0..2",
        "--out", &path(tmp.path(), "ens"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn distill_seed_count_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "distill", "--data", &path(tmp.path(), "missing.jsonl"), "--loss", "mse-vector",
        "--epochs", "1", "--batch", "8", "--lr", "1e-3", "--seeds", "0..3", "--N", "5",
        "--out", &path(tmp.path(), "ens"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn theory_bounds_hypothesis_violation_exits_3_with_product() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "theory", "bounds", "--gamma", "0.5", "--LT", "1", "--Lpi", "1",
        "--out", &path(tmp.path(), "b.csv"),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('1'), "message should cite the offending product: {stderr}");
}

#[test]
fn theory_kappa_matches_analytic_values() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = path(tmp.path(), "k.csv");
    let out = run(&["theory", "kappa", "--k", "2", "4", "8", "--resolution", "1e-3",
                    "--out", &csv]);
    assert_eq!(out.status.code(), Some(0));
    let body = std::fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next().unwrap(), "k,kappa_analytic,kappa_grid");
    let expected = [1.41421, 0.76537, 0.39018];
    for (line, want) in lines.zip(expected) {
        let cols: Vec<&str> = line.split(',').collect();
        let analytic: f64 = cols[1].parse().unwrap();
        assert!((analytic - want).abs() < 1e-5, "{line}");
    }
}

#[test]
fn eval_with_mismatched_architectures_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for step in [
        vec!["contexts", "--env", "reacher", "--seed", "1", "--train", "2", "--val", "1",
             "--test", "2", "--out", &path(d, "ctx")],
        vec!["collect", "--env", "reacher", "--contexts", &path(d, "ctx/train.json"),
             "--kind", "training-contexts", "--size", "40", "--seed", "0",
             "--out", &path(d, "data.jsonl")],
        vec!["distill", "--data", &path(d, "data.jsonl"), "--loss", "mse-vector",
             "--epochs", "1", "--batch", "8", "--lr", "1e-3", "--hidden", "8",
             "--seeds", "0..2", "--out", &path(d, "ens-a")],
        vec!["distill", "--data", &path(d, "data.jsonl"), "--loss", "mse-vector",
             "--epochs", "1", "--batch", "8", "--lr", "1e-3", "--hidden", "16",
             "--seeds", "0..2", "--out", &path(d, "ens-b")],
    ] {
        let out = run(&step);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // splice one mismatched member into ens-a
    std::fs::copy(d.join("ens-b/member-0.json"), d.join("ens-a/member-0.json")).unwrap();
    let out = run(&[
        "eval", "--env", "reacher", "--contexts", &path(d, "ctx/test.json"),
        "--ensemble", &path(d, "ens-a"), "--out", &path(d, "r.csv"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_results_csv_has_contract_header() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for step in [
        vec!["contexts", "--env", "reacher", "--seed", "1", "--train", "2", "--val", "1",
             "--test", "2", "--out", &path(d, "ctx")],
        vec!["collect", "--env", "reacher", "--contexts", &path(d, "ctx/train.json"),
             "--kind", "plus-ck", "--k", "4", "--size", "40", "--seed", "0",
             "--out", &path(d, "data.jsonl")],
        vec!["distill", "--data", &path(d, "data.jsonl"), "--loss", "mse-vector",
             "--epochs", "1", "--batch", "8", "--lr", "1e-3", "--hidden", "8",
             "--seeds", "0..2", "--out", &path(d, "ens")],
        vec!["eval", "--env", "reacher", "--contexts", &path(d, "ctx/test.json"),
             "--split", "test", "--ensemble", &path(d, "ens"), "--out", &path(d, "r.csv")],
    ] {
        let out = run(&step);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let body = std::fs::read_to_string(d.join("r.csv")).unwrap();
    let mut lines = body.lines();
    assert_eq!(
        lines.next().unwrap(),
        "env,dataset_kind,loss_kind,N,subgroup_k,split,mean,std,ci95,seeds,discounted"
    );
    let row = lines.next().unwrap();
    assert!(row.starts_with("reacher,plus_ck,mse-vector,2,4,test,"), "{row}");
}

#[test]
fn unknown_flag_exits_2() {
    let out = run(&["contexts", "--env", "reacher", "--nonsense", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
