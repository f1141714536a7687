mod common;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use socratic_core::model::conversation_to_line;

fn socratic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socratic")).args(args).output().unwrap()
}

fn write_corpus(path: &Path, n: usize) {
    let lines: Vec<String> = common::synthetic_corpus(n).iter().map(conversation_to_line).collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn plan_emits_one_record_per_turn() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    std::fs::write(&input, "{\"conversation_id\":\"a\",\"turns\":[{\"seeker\":\"I always fail\",\"supporter\":null}]}\n")
        .unwrap();
    let out = socratic(&["plan", "--input", s(&input), "--planner", "rule"]);
    assert!(out.status.success());
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["method"], "definition");
    assert_eq!(rec["conversation_id"], "a");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = socratic(&["plan", "--input", s(&empty)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    assert_eq!(socratic(&["plan", "--input", "/nonexistent.jsonl"]).status.code(), Some(2));
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(socratic(&["plan", "--input", s(&bad)]).status.code(), Some(2));
}

#[test]
fn plan_reads_stdin() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_socratic"))
        .args(["plan", "--input", "-", "--out", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"conversation_id\":\"a\",\"turns\":[{\"seeker\":\"If I quit, what then?\"}]}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("counterfactual_reasoning"));
}

#[test]
fn forge_accounting_and_rubric_validation() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    write_corpus(&input, 12);
    let (pairs, stats) = (dir.path().join("p.jsonl"), dir.path().join("s.json"));
    let out = socratic(&["forge", "--input", s(&input), "--out", s(&pairs), "--stats", s(&stats), "--min-total", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let st: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    let n = |k: &str| st[k].as_u64().unwrap();
    assert_eq!(n("generated"), n("retained") + n("rejected_by_contrast") + n("rejected_by_threshold") + n("errored"));
    assert_eq!(n("retained"), n("contexts"));
    assert_eq!(std::fs::read_to_string(&pairs).unwrap().lines().count() as u64, n("retained"));

    let rubric = dir.path().join("r.json");
    std::fs::write(
        &rubric,
        r#"{"weights":{"guidance":0.1,"empathy":0.2,"semantic_relevance":0.15,"interrogative_structure":0.15,"conciseness":0.1,"diversity":0.1,"tone_friendliness":0.1}}"#,
    )
    .unwrap();
    let out = socratic(&["forge", "--input", s(&input), "--rubric", s(&rubric)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sum"));
}

#[test]
fn split_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    write_corpus(&input, 40);
    let a = socratic(&["split", "--input", s(&input), "--ratio", "0.13", "--seed", "9"]);
    let b = socratic(&["split", "--input", s(&input), "--ratio", "0.13", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let m: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(m["test_ids"].as_array().unwrap().len(), 5);
    assert_eq!(m["train_ids"].as_array().unwrap().len(), 35);
    assert_eq!(socratic(&["split", "--input", s(&input), "--ratio", "1.2"]).status.code(), Some(1));
}

#[test]
fn eval_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let responses = dir.path().join("r.jsonl");
    std::fs::write(&responses, "{\"response\":\"a b a\"}\n").unwrap();
    let out = socratic(&["eval", "--responses", s(&responses), "--metrics", "distinct1"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["per_metric"]["distinct1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-9);

    std::fs::write(&responses, "What evidence do you have?\nWhy do you believe that?\n").unwrap();
    let out = socratic(&["eval", "--responses", s(&responses), "--metrics", "pqa"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["per_metric"]["pqa"], 1.0);
    assert_eq!(report["metric_modes"]["pqa"], "rule");
    assert_eq!(socratic(&["eval", "--responses", s(&responses), "--metrics", "bleu"]).status.code(), Some(1));
}

#[test]
fn config_file_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.jsonl");
    write_corpus(&input, 6);
    let config = dir.path().join("cfg.json");
    std::fs::write(&config, r#"{"min_total": 2.0}"#).unwrap();
    let stats = dir.path().join("s.json");
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_socratic"));
        cmd.args(["--config", s(&config), "forge", "--input", s(&input), "--out", "/dev/null", "--stats", s(&stats)]);
        if let Some(f) = flag {
            cmd.args(["--min-total", f]);
        }
        match env {
            Some(v) => cmd.env("SOCRATIC_MIN_TOTAL", v),
            None => cmd.env_remove("SOCRATIC_MIN_TOTAL"),
        };
        assert!(cmd.output().unwrap().status.success());
        let st: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
        st["retained"].as_u64().unwrap()
    };
    let contexts: u64 = common::synthetic_corpus(6).iter().map(|c| c.turns.len() as u64).sum();
    assert_eq!(run(None, None), 0);
    assert_eq!(run(Some("0"), None), contexts);
    assert_eq!(run(Some("2"), Some("0")), contexts);
}

#[test]
fn serve_health_and_port_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_socratic"))
        .args(["serve", "--addr", "127.0.0.1:0", "--data-dir", s(dir.path())])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let health = ureq::get(&format!("{url}/v1/healthz")).call().unwrap();
    assert_eq!(health.status(), 200);
    let created: serde_json::Value = ureq::post(&format!("{url}/v1/sessions")).call().unwrap().into_json().unwrap();
    let id = created["session_id"].as_str().unwrap();

    let addr = url.trim_start_matches("http://");
    let busy = socratic(&["serve", "--addr", addr, "--data-dir", s(dir.path())]);
    assert_eq!(busy.status.code(), Some(3));

    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    let status = child.wait().unwrap();
    assert!(status.success(), "{status:?}");
    assert!(dir.path().join(format!("{id}.jsonl")).exists());
}
