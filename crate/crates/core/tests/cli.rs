use std::path::Path;
use std::process::Command;

use mbw::io::load_annotations;
use mbw::metrics::read_report;
use mbw::pipeline::Manifest;

fn mbw(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mbw"))
        .args(args)
        .env_remove("MBW_SEED")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn run_writes_annotations_manifest_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbw(&[
        "run", "--out", path(dir.path()), "--views", "2", "--label-fraction", "0.02", "--iterations", "3", "--seed", "7",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let records = load_annotations(&dir.path().join("annotations.jsonl")).unwrap();
    assert_eq!(records.len(), 300 * 2);
    // manual annotations cover 2% of the frames in every view
    let manual = records.iter().filter(|r| r.w_gt.is_complete()).count();
    assert_eq!(manual, 6 * 2);
    assert!(records.iter().filter(|r| !r.w_gt.is_complete()).all(|r| r.w_gt.present_count() == 0));

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest.error.is_none());
    assert_eq!(manifest.stages.len(), 4);
    assert_eq!(manifest.dataset.seed, 7);

    let report = read_report(&dir.path().join("report.csv")).unwrap();
    assert!(report.iter().any(|r| r.metric == "pck_auc" && r.view.is_none()));
    let header = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(header.starts_with("metric,iteration,view,value\n"));
    assert!(dir.path().join("prior.bin").exists());

    let curves = mbw(&["report", "--run", path(dir.path())]);
    assert_eq!(curves.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&curves.stdout).starts_with("curve,iteration,view,x,y\n"));
}

#[test]
fn eval_of_groundtruth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbw(&["synth", "--out", path(dir.path()), "--frames", "40", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let gt = dir.path().join("groundtruth.jsonl");
    assert_eq!(load_annotations(&gt).unwrap().len(), 40 * 2);

    let report = dir.path().join("eval.csv");
    let out = mbw(&["eval", "--pred", path(&gt), "--gt", path(&gt), "--out", path(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_report(&report).unwrap();
    let value = |m: &str| rows.iter().find(|r| r.metric == m && r.view.is_none()).map(|r| r.value).unwrap();
    assert_eq!(value("pck_auc"), 1.0);
    assert!(value("pa_mpjpe") < 1e-9);
}

#[test]
fn seed_falls_back_to_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flag = mbw(&["synth", "--out", path(a.path()), "--frames", "20", "--seed", "11"]);
    assert_eq!(flag.status.code(), Some(0));
    let env = Command::new(env!("CARGO_BIN_EXE_mbw"))
        .args(["synth", "--out", path(b.path()), "--frames", "20"])
        .env("MBW_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("dataset.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let bad = Command::new(env!("CARGO_BIN_EXE_mbw"))
        .args(["synth", "--out", path(b.path())])
        .env("MBW_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    assert_eq!(mbw(&["run", "--baseline", "bogus"]).status.code(), Some(1));
    assert_eq!(mbw(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mbw(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let out = mbw(&["eval", "--pred", path(&missing), "--gt", path(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}
