use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn alid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alid"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let last = text.lines().last().expect("summary line");
    serde_json::from_str(last).expect("summary is JSON")
}

/// Small capped instance with its index; returns the suggested kernel scale.
fn prepare(dir: &Path) -> f64 {
    let out = alid(
        &["generate", "--regime", "cap", "--cap", "200", "--n", "600", "--seed", "3", "--out", "data.bin", "--truth", "truth.json"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    let scale = s["scale"].as_f64().unwrap();
    let r = format!("{}", 3.0 * scale);
    let out = alid(&["index", "--data", "data.bin", "--mu", "10", "--tables", "20", "--r", &r, "--out", "index.bin"], dir);
    assert!(out.status.success());
    s["kernel"]["k"].as_f64().unwrap()
}

#[test]
fn index_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let out = alid(&["index", "--data", "data.bin", "--r", "50", "--seed", "4", "--out", "a.bin"], dir.path());
    assert!(out.status.success());
    let out = alid(&["index", "--data", "data.bin", "--r", "50", "--seed", "4", "--out", "b.bin"], dir.path());
    assert!(out.status.success());
    let a = std::fs::read(dir.path().join("a.bin")).unwrap();
    let b = std::fs::read(dir.path().join("b.bin")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn detect_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let k = prepare(dir.path());
    let data_before = std::fs::read(dir.path().join("data.bin")).unwrap();
    let k = k.to_string();
    let out = alid(
        &["detect", "--data", "data.bin", "--index", "index.bin", "--k", &k, "--bootstrap-r", "38", "--out", "clusters.jsonl"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(summary(&out)["command"], "detect");
    let text = std::fs::read_to_string(dir.path().join("clusters.jsonl")).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|c| c["density"].as_f64().unwrap() >= 0.75));
    assert_eq!(std::fs::read(dir.path().join("data.bin")).unwrap(), data_before);

    let out = alid(&["eval", "--truth", "truth.json", "--clusters", "clusters.jsonl"], dir.path());
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["avg_f"].as_f64().unwrap() > 0.9);
}

#[test]
fn eval_of_truth_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    let labels = truth["labels"].as_array().unwrap();
    let clusters = truth["clusters"].as_u64().unwrap() as usize;
    let mut body = String::new();
    for c in 0..clusters {
        let support: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].as_u64() == Some(c as u64)).collect();
        let w = 1.0 / support.len() as f64;
        let line = serde_json::json!({
            "label": c, "density": 0.9, "support": support,
            "weights": vec![w; support.len()], "converged": true,
        });
        body.push_str(&line.to_string());
        body.push('\n');
    }
    std::fs::write(dir.path().join("perfect.jsonl"), body).unwrap();
    let out = alid(&["eval", "--truth", "truth.json", "--clusters", "perfect.jsonl"], dir.path());
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["avg_f"].as_f64().unwrap(), 1.0);
}

#[test]
fn palid_writes_clusters_and_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let k = prepare(dir.path()).to_string();
    let out = alid(
        &[
            "palid", "--data", "data.bin", "--index", "index.bin", "--k", &k, "--bootstrap-r", "38", "--workers", "2",
            "--out", "p.jsonl", "--assign", "p.assign.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out);
    assert_eq!(s["failures"], 0);
    let assign = std::fs::read_to_string(dir.path().join("p.assign.jsonl")).unwrap();
    for line in assign.lines() {
        let e: Value = serde_json::from_str(line).unwrap();
        assert!(e["density"].as_f64().unwrap() >= 0.75);
    }
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = alid(&["detect", "--data", "x.bin"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(summary(&out)["exit_code"], 1);
    let out = alid(&["index", "--data", "missing.bin", "--r", "1", "--out", "i.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = alid(&["index", "--data", "missing.bin", "--r", "-1", "--out", "i.bin"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(dir.path().join("bad.csv"), "1,2\n3\n").unwrap();
    let out = alid(&["index", "--data", "bad.csv", "--r", "1", "--out", "i.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("i.bin").exists());
    let out = alid(&["bench", "--regime", "cap", "--grid", "400,200"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = alid(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bench_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = alid(&["bench", "--regime", "cap", "--cap", "100", "--grid", "2e2,4e2", "--out", "b.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert!(csv.starts_with("n,runtime_s,peak_mem_bytes,avg_f,sparse_degree\n200,"));
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(side["data_seed"], 0);
    assert_eq!(side["memory_method"], "allocator");
}
