use std::path::{Path, PathBuf};
use std::process::Command;

use fuzzkb_core::rulebase::{confidence_gap, parse_prolog_kb, KnowledgeBase};
use fuzzkb_service::pipeline::PipelineSummary;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn fuzzkb() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fuzzkb"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn missing_prediction_source_fails() {
    let out = tempfile::tempdir().unwrap();
    let status = fuzzkb()
        .args(["--data"])
        .arg(data("wine.arff"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("--baseline"));
}

#[test]
fn missing_files_fail() {
    let out = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| fuzzkb().args(args).arg("--out").arg(out.path()).output().unwrap();
    assert!(!run(&["--data", "/nonexistent.arff", "--baseline"]).status.success());
    let wine = data("wine.arff");
    let wine = wine.to_str().unwrap();
    assert!(!run(&["--data", wine, "--predictions", "/nonexistent.csv"]).status.success());
    assert!(!run(&["--data", wine, "--baseline", "--implicator", "mystery"]).status.success());
    assert!(!run(&["--sweep", "/nonexistent.toml"]).status.success());
}

#[test]
fn baseline_pipeline_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let status = fuzzkb()
        .arg("--data")
        .arg(data("wine.arff"))
        .args(["--baseline", "--symbols", "3", "--implicator", "fodor", "--distance", "crisp", "--lambda", "2"])
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let summary: PipelineSummary =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.rules, 178);
    assert_eq!(summary.symbols, 3);
    assert!((0.0..=1.0).contains(&summary.complexity));
    let kb = KnowledgeBase::from_json(&std::fs::read_to_string(out.path().join("kb.json")).unwrap()).unwrap();
    let pl = parse_prolog_kb(&std::fs::read_to_string(out.path().join("kb.pl")).unwrap()).unwrap();
    assert!(confidence_gap(&kb.rules, &pl.rules).unwrap() <= 5e-7);
    assert!(out.path().join("granulation.json").is_file());
}

#[test]
fn sweep_flag_writes_csv_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        format!(
            "datasets = [{:?}]\nsymbol_counts = [2, 3]\nlambdas = [1.0]\ncharts = true\n",
            data("wine.arff").to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = fuzzkb().arg("--sweep").arg(&spec).arg("--out").arg(&out).status().unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 2);
    assert!(std::fs::read_to_string(out.join("wine_sweep.svg")).unwrap().starts_with("<svg"));
}
