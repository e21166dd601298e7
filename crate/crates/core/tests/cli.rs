use std::path::Path;
use std::process::{Command, Output};

fn lcpn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcpn"))
        .args(args)
        .env_remove("LCPN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lcpn(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, labels: &str, seed: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    ok(&["synth", "--out", p(&path), "--labels", labels, "--seed", seed]);
    path
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.jsonl", "12", "5");
    let b = synth(dir.path(), "b.jsonl", "12", "5");
    let c = synth(dir.path(), "c.jsonl", "12", "6");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn seed_env_var_is_the_default_seed() {
    let dir = tempfile::tempdir().unwrap();
    let flag = synth(dir.path(), "flag.jsonl", "10", "9");
    let env = dir.path().join("env.jsonl");
    let out = Command::new(env!("CARGO_BIN_EXE_lcpn"))
        .args(["synth", "--out", p(&env)])
        .env("LCPN_SEED", "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(flag).unwrap(), std::fs::read(env).unwrap());
}

#[test]
fn split_labels_writes_all_sections() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "m.jsonl", "30", "0");
    let split = dir.path().join("split.txt");
    ok(&["split-labels", "--manifest", p(&m), "--base", "20", "--holdout", "5", "--out", p(&split)]);
    let text = std::fs::read_to_string(&split).unwrap();
    let mut counts = Vec::new();
    for line in text.lines() {
        if line.starts_with('[') {
            counts.push(0);
        } else {
            *counts.last_mut().unwrap() += 1;
        }
    }
    assert_eq!(counts, vec![20, 5, 5]);
}

#[test]
fn evaluate_report_is_deterministic_and_titled() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "m.jsonl", "40", "1");
    let split = dir.path().join("split.txt");
    ok(&["split-labels", "--manifest", p(&m), "--base", "20", "--holdout", "5", "--out", p(&split)]);
    let args = [
        "evaluate", "--manifest", p(&m), "--split", p(&split), "--mode", "base_and_novel", "--n-way", "30",
        "--episodes", "3", "--runs", "2", "--no-timestamp",
    ];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    assert!(first.starts_with("30-way 3-shot Base & Novel\n"), "{first}");
    for name in ["LC-Protonets", "ML-PNs", "One-vs.-Rest"] {
        assert!(first.contains(name));
    }

    let single = ok(&[
        "evaluate", "--manifest", p(&m), "--split", p(&split), "--method", "lc-protonets", "--episodes", "3", "--runs",
        "1", "--no-timestamp",
    ]);
    assert!(single.contains("± n/a"));
    assert!(!single.contains("ML-PNs"));
    let stamped = ok(&["evaluate", "--manifest", p(&m), "--split", p(&split), "--episodes", "2", "--runs", "1"]);
    assert!(stamped.contains("generated: "));
}

#[test]
fn bench_emits_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "m.jsonl", "30", "2");
    let csv = ok(&["bench", "--manifest", p(&m), "--n-values", "5,15,30", "--repetitions", "2"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "N,lcp_count,lcp_count_dedup,ms_per_item,ci_low,ci_high");
    assert_eq!(lines.len(), 4);
}

#[test]
fn train_then_evaluate_with_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), "m.jsonl", "20", "3");
    let split = dir.path().join("split.txt");
    let adapter = dir.path().join("adapter.txt");
    let log = dir.path().join("log.csv");
    ok(&["split-labels", "--manifest", p(&m), "--base", "10", "--holdout", "5", "--out", p(&split)]);
    let train = [
        "train-adapter", "--manifest", p(&m), "--split", p(&split), "--out", p(&adapter), "--log", p(&log),
        "--max-epochs", "2", "--episodes-per-epoch", "5", "--validation-episodes", "3",
    ];
    let csv = ok(&train);
    assert_eq!(csv, std::fs::read_to_string(&log).unwrap());
    assert!(csv.starts_with("epoch,mean_loss,val_macro_f1\n0,"));
    assert_eq!(csv, ok(&train));
    assert!(std::fs::read_to_string(&adapter).unwrap().starts_with("lcpn-adapter 1\n32 32\n"));
    let report = ok(&[
        "evaluate", "--manifest", p(&m), "--split", p(&split), "--adapter", p(&adapter), "--episodes", "2", "--runs",
        "1", "--no-timestamp",
    ]);
    assert!(report.contains("adapter: "));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lcpn(&["evaluate", "--bogus"]).status.code(), Some(2));
    assert_eq!(lcpn(&["synth"]).status.code(), Some(2));
    assert_eq!(lcpn(&["evaluate", "--manifest", "x", "--split", "y", "--method", "knn"]).status.code(), Some(2));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        concat!(
            r#"{"format":"lcpn-embeddings/1","dimension":3,"vocabulary":["a","b"]}"#,
            "\n",
            r#"{"id":"x","labels":["a"],"embedding":[1,2]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = lcpn(&["bench", "--manifest", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.jsonl:2:"), "{err}");

    let m = synth(dir.path(), "m.jsonl", "10", "0");
    let split = dir.path().join("split.txt");
    let out = lcpn(&["split-labels", "--manifest", p(&m), "--base", "20", "--out", p(&split)]);
    assert_eq!(out.status.code(), Some(1));
}
