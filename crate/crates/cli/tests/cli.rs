use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn cspine(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cspine"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cspine(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has an error record");
    serde_json::from_str(line).expect("last stderr line is JSON")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn generated(dir: &Path) {
    ok(dir, &["generate", "--out", "g", "--n", "60", "--seed", "5"]);
}

#[test]
fn generate_segment_train_chain_records_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    ok(d, &["segment", "--reports", "g/reports.jsonl", "--labels", "g/bundles.jsonl", "--out", "s"]);
    ok(d, &["featurize", "--bundles", "s/bundles.jsonl", "--out", "f"]);
    let stdout = ok(
        d,
        &[
            "--json", "train", "--bundles", "s/bundles.jsonl", "--embeddings", "f/embeddings.bin", "--out", "t",
            "--epochs", "2",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["mode"], "multitask");

    let seg = json(&d.join("s/segment.manifest.json"));
    assert_eq!(seg["inputs"][0]["sha256"], sha256(&d.join("g/reports.jsonl")));
    assert_eq!(seg["outputs"][0]["sha256"], sha256(&d.join("s/bundles.jsonl")));

    let train = json(&d.join("t/train.manifest.json"));
    assert_eq!(train["inputs"][0]["sha256"], seg["outputs"][0]["sha256"]);
    assert_eq!(train["inputs"][1]["sha256"], sha256(&d.join("f/embeddings.bin")));
    assert_eq!(train["outputs"][0]["sha256"], sha256(&d.join("t/model.ckpt")));
    assert_eq!(train["seed"], 0);
    assert_eq!(train["config_hash"].as_str().unwrap().len(), 64);

    let eval = ok(
        d,
        &["eval", "--bundles", "s/bundles.jsonl", "--embeddings", "f/embeddings.bin", "--out", "e", "--model", "t/model.ckpt"],
    );
    assert!(eval.contains("macro-F1"));
}

#[test]
fn generation_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--out", "a", "--n", "40", "--seed", "9"]);
    ok(d, &["generate", "--out", "b", "--n", "40", "--seed", "9"]);
    for f in ["reports.jsonl", "bundles.jsonl", "assignments.jsonl", "provenance.jsonl"] {
        assert_eq!(sha256(&d.join("a").join(f)), sha256(&d.join("b").join(f)), "{f}");
    }
}

#[test]
fn distance_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    let args = |out: &'static str| ["distance", "--bundles", "g/bundles.jsonl", "--out", out, "--projections", "40"];
    ok(d, &args("d1"));
    ok(d, &args("d2"));
    let a = std::fs::read(d.join("d1/distances.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.join("d2/distances.csv")).unwrap());
    let csv = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    let width = rows[0].split(',').count();
    assert_eq!(rows.len(), width);
    let report = json(&d.join("d1/distances.json"));
    let bound = report["upper_bound"].as_f64().unwrap();
    for row in report["values"].as_array().unwrap() {
        for v in row.as_array().unwrap().iter().filter_map(|v| v.as_f64()) {
            assert!(v >= 0.0 && v <= bound);
        }
    }
}

#[test]
fn config_file_sets_values_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.toml"), "[generate]\nn_reports = 25\nseed = 4\n").unwrap();
    ok(d, &["--config", "run.toml", "generate", "--out", "a"]);
    assert_eq!(std::fs::read_to_string(d.join("a/reports.jsonl")).unwrap().lines().count(), 25);
    assert_eq!(json(&d.join("a/generate.manifest.json"))["seed"], 4);
    ok(d, &["--config", "run.toml", "generate", "--out", "b", "--n", "30"]);
    assert_eq!(std::fs::read_to_string(d.join("b/reports.jsonl")).unwrap().lines().count(), 30);
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "[generate]\nreports = 25\n").unwrap();
    let out = cspine(d, &["--config", "bad.toml", "generate", "--out", "a"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"], "config");
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cspine(tmp.path(), &["train", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["code"], 2);
    let out = cspine(tmp.path(), &["generate", "--out", "x", "--ocr-fraction", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cspine(tmp.path(), &["featurize", "--bundles", "absent.jsonl", "--out", "f"]);
    assert_eq!(out.status.code(), Some(3));
    let record = error_record(&out);
    assert_eq!(record["error"], "missing_input");
    assert!(record["message"].as_str().unwrap().contains("absent.jsonl"));
}

#[test]
fn invalid_labels_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    let text = std::fs::read_to_string(d.join("g/bundles.jsonl")).unwrap();
    let mut first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    first["labels"][0]["class_index"] = serde_json::json!(7);
    std::fs::write(d.join("bad.jsonl"), format!("{first}\n")).unwrap();
    let out = cspine(d, &["featurize", "--bundles", "bad.jsonl", "--out", "f"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"], "validation");
}

#[test]
fn bench_reports_both_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    generated(d);
    ok(d, &["bench", "--bundles", "g/bundles.jsonl", "--out", "b", "--inputs", "150", "--repeats", "2", "--hidden-dim", "32"]);
    let report = json(&d.join("b/bench.json"));
    let results = report["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|r| r["instances"] == 150));
    assert!(report["ratio"].as_f64().unwrap() > 1.0);
}

#[test]
fn help_lists_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let help = ok(tmp.path(), &["--help"]);
    assert!(help.contains("Exit codes"));
    for cmd in ["generate", "segment", "featurize", "train", "eval", "distance", "bench"] {
        assert!(help.contains(cmd), "{cmd}");
    }
}
