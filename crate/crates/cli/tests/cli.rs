use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn peco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_peco")).args(args).output().expect("failed to spawn peco")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, beta: f64, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let out = peco(&["synth", "--beta", &beta.to_string(), "--seed", &seed.to_string(), "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn analyze_auc(dir: &Path, input: &Path, out_name: &str) -> Value {
    let out_dir = dir.join(out_name);
    let out = peco(&["analyze", "--input", input.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    read_json(&out_dir.join("report.json"))
}

#[test]
fn analyze_pure_clusters_has_high_auc() {
    let dir = TempDir::new().unwrap();
    let input = synth(dir.path(), "beta1.bin", 1.0, 42);
    let report = analyze_auc(dir.path(), &input, "out");
    let auc = report["peco"]["auc"].as_f64().unwrap();
    assert!(auc >= 0.7, "auc={auc}");

    assert_eq!(report["format_version"], 1);
    assert_eq!(report["config"]["k"], 50);
    assert_eq!(report["config"]["seed"], 42);
    assert_eq!(report["config"]["pca_dims"], 30);
    assert_eq!(report["pseudoclassification"]["baseline"]["pair"], 0.5);
    for pair in ["ne", "nc", "ec"] {
        assert!(report["pseudoclassification"]["pairs"][pair].as_f64().unwrap() >= 0.99);
    }
    assert!(dir.path().join("out/pca_model.json").exists());
    assert!(dir.path().join("out/cluster_model.json").exists());
}

#[test]
fn analyze_label_free_clusters_has_low_auc() {
    let dir = TempDir::new().unwrap();
    let input = synth(dir.path(), "beta0.bin", 0.0, 42);
    let report = analyze_auc(dir.path(), &input, "out");
    let auc = report["peco"]["auc"].as_f64().unwrap();
    assert!(auc <= 0.1, "auc={auc}");
}

#[test]
fn missing_input_reports_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("does-not-exist.bin");
    let out = peco(&["analyze", "--input", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("IoError"), "{}", stderr(&out));
}

#[test]
fn corrupt_input_reports_format_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"NOTPECO!garbage-garbage-garbage").unwrap();
    let out = peco(&["analyze", "--input", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("FormatError"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(peco(&["analyze"]).status.code(), Some(1));
    assert_eq!(peco(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(peco(&["analyze", "--input", "x.bin", "--metric", "manhattan"]).status.code(), Some(1));
    assert_eq!(peco(&["--help"]).status.code(), Some(0));
}

#[test]
fn analyze_writes_tsne_outputs() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("small.bin");
    let out = peco(&["synth", "--n", "400", "--dim", "8", "--centers", "5", "--beta", "1", "--out", input.to_str().unwrap()]);
    assert!(out.status.success());
    let out_dir = dir.path().join("out");
    let out = peco(&[
        "analyze",
        "--input",
        input.to_str().unwrap(),
        "--k",
        "8",
        "--tsne",
        "--tsne-iterations",
        "300",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("tsne.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x,y,label,cluster_id,high_bias");
    assert_eq!(csv.lines().count(), 401);
    let svg = std::fs::read_to_string(out_dir.join("tsne.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("<path"));
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["config"]["tsne"]["input"], "pca");
}

#[test]
fn compare_orders_by_beta() {
    let dir = TempDir::new().unwrap();
    let paths: Vec<PathBuf> =
        [0.1, 0.5, 0.9].iter().map(|&b| synth(dir.path(), &format!("beta{b}.bin"), b, 42)).collect();
    let out_dir = dir.path().join("cmp");
    let mut args = vec!["compare"];
    for p in &paths {
        args.extend(["--input", p.to_str().unwrap()]);
    }
    args.extend(["--no-pairwise", "--out", out_dir.to_str().unwrap()]);
    let out = peco(&args);
    assert!(out.status.success(), "{}", stderr(&out));

    let report = read_json(&out_dir.join("comparison.json"));
    let ranking = report["ranking"].as_array().unwrap();
    let names: Vec<&str> = ranking.iter().map(|e| e["dataset"].as_str().unwrap()).collect();
    assert_eq!(names, ["beta0.9", "beta0.5", "beta0.1"]);
    let aucs: Vec<f64> = ranking.iter().map(|e| e["auc"].as_f64().unwrap()).collect();
    assert!(aucs[0] > aucs[1] && aucs[1] > aucs[2], "{aucs:?}");

    let overlay = std::fs::read_to_string(out_dir.join("peco_overlay.csv")).unwrap();
    assert_eq!(overlay.lines().next().unwrap(), "threshold,beta0.1,beta0.5,beta0.9");
    assert_eq!(overlay.lines().count(), 102);
}

#[test]
fn compare_single_input_is_param_error() {
    let dir = TempDir::new().unwrap();
    let path = synth(dir.path(), "one.bin", 0.5, 1);
    let out = peco(&["compare", "--input", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ParamError"), "{}", stderr(&out));
}

#[test]
fn compare_same_dataset_twice_is_identical() {
    let dir = TempDir::new().unwrap();
    let path = synth(dir.path(), "same.bin", 0.5, 3);
    let p = path.to_str().unwrap();
    let out_dir = dir.path().join("cmp");
    let out = peco(&["compare", "--input", p, "--input", p, "--no-pairwise", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_json(&out_dir.join("comparison.json"));
    let ranking = report["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 2);
    assert_eq!(ranking[0]["auc"], ranking[1]["auc"]);
    assert_eq!(ranking[0]["outlier_counts"], ranking[1]["outlier_counts"]);
}

#[test]
fn synth_round_trips_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "a.bin", 0.5, 9);
    let b = synth(dir.path(), "b.bin", 0.5, 9);
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let ds = peco_core::io::read_path(&a).unwrap();
    assert_eq!(ds.len(), 9000);
    assert_eq!(ds.dim(), 32);
    assert_eq!(&bytes[..8], b"PECOEMB1");
}

#[test]
fn synth_zero_examples_is_param_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("empty.bin");
    let out = peco(&["synth", "--n", "0", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ParamError"));
    assert!(!path.exists());
}
