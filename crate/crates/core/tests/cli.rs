use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn iotase(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_iotase"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("IOTASE_CONFIG")
        .output()
        .unwrap();
    assert!(out.status.success(), "iotase {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dataset_index_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let snapshot = dir.path().join("index.bin");

    let gen = stdout(&iotase(&["dataset", "generate", "--services", "40", "--devices", "800", "--seed", "3", "--out", s(&data)]));
    assert!(gen.contains("40 services, 800 documents"), "{gen}");

    let loaded: Value = serde_json::from_str(&stdout(&iotase(&["dataset", "load", "--data", s(&data)]))).unwrap();
    assert_eq!(loaded["services"], 40);
    assert_eq!(loaded["documents"], 800);
    assert_eq!(loaded["per_service"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum::<u64>(), 800);

    let built = stdout(&iotase(&["index", "build", "--data", s(&data), "--out", s(&snapshot)]));
    assert!(built.starts_with("40 services"), "{built}");
    assert!(snapshot.exists());

    let hits = stdout(&iotase(&["index", "search", "--data", s(&data), "--index", s(&snapshot), "--query", "dog park", "--k", "2"]));
    assert_eq!(hits.lines().count(), 2, "{hits}");
    assert!(hits.starts_with("1. "));

    let report: Value = serde_json::from_str(&stdout(&iotase(&["eval", "intents", "--json"]))).unwrap();
    assert_eq!(report["cases"].as_array().unwrap().len(), 25);
    assert!(report["topk_hits"].as_u64().unwrap() >= report["top1_hits"].as_u64().unwrap());

    let latency: Value = serde_json::from_str(&stdout(&iotase(&["eval", "latency", "--n", "5", "--json"]))).unwrap();
    assert_eq!(latency["n"], 5);
    assert_eq!(latency["errors"], 0);
}

#[test]
fn simulate_writes_ndjson() {
    let out = stdout(&iotase(&["simulate", "--seed", "1", "--rate", "50", "--duration", "0.04"]));
    let lines: Vec<&str> = out.lines().collect();
    assert!(!lines.is_empty());
    for line in lines {
        let msg: Value = serde_json::from_str(line).unwrap();
        assert!(msg["node_id"].is_string());
    }
}
