mod common;

use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use axum::http::StatusCode;
use common::{call, complete_session, parse};
use serde_json::json;
use valmetric::recommend::{DecisionGraph, TranscriptEntry};
use valmetric_cli::server::router;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_valmetric"));
    c.env_remove("METRICS_RELOADED_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn put(dir: &Path, name: &str, v: &serde_json::Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Fingerprint and transcript of the scripted SemS dialogue, plus its HTTP pool bytes.
async fn dialogue() -> (serde_json::Value, serde_json::Value, String, String) {
    let app = router();
    let (id, state) = complete_session(&app).await;
    let transcript = state["transcript"].clone();
    let t: Vec<TranscriptEntry> = serde_json::from_value(transcript.clone()).unwrap();
    let s = valmetric::recommend::Session::replay(DecisionGraph::standard(), &t).unwrap();
    let (_, pool) = call(&app, "GET", &format!("/session/{id}/pool"), None).await;
    let (st, _) = call(&app, "POST", &format!("/session/{id}/guide"), Some(json!({"guide": "DG6.1", "option": "DSC"}))).await;
    assert_eq!(st, StatusCode::OK);
    let (_, guided) = call(&app, "GET", &format!("/session/{id}/pool"), None).await;
    (s.fingerprint().to_json(), transcript, pool, guided)
}

#[tokio::test]
async fn cli_and_http_pools_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (fp, transcript, http_pool, http_guided) = dialogue().await;
    let f = put(dir.path(), "fp.json", &fp);

    let o = run(&["recommend", "--fingerprint", &f]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), format!("{http_pool}\n"));
    let summary = String::from_utf8(o.stderr).unwrap();
    assert!(summary.contains("DG6.1") && summary.contains("DSC"), "{summary}");

    let o = run(&["recommend", "--fingerprint", &f, "--guide", "DG6.1=DSC"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), format!("{http_guided}\n"));

    // transcript replay gives the same pool
    let t = put(dir.path(), "t.json", &transcript);
    let out = dir.path().join("pool.json");
    let o = run(&["recommend", "--answers-from", &t, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), http_pool);
}

#[test]
fn recommend_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let partial = put(dir.path(), "fp.json", &json!({"FP1.1": "SemS"}));
    let o = run(&["recommend", "--fingerprint", &partial]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("missing fingerprint items") && err.contains("FP"), "{err}");

    let bad = put(dir.path(), "bad.json", &json!({"FP1.1": 3}));
    assert_eq!(run(&["recommend", "--fingerprint", &bad]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--fingerprint", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(run(&["recommend"]).status.code(), Some(2));
    assert_eq!(run(&["recommend", "--fingerprint", &partial, "--guide", "DG6.1"]).status.code(), Some(2));
}

#[test]
fn interactive_dialogue_reaches_a_pool() {
    // Category mapping answers, then "no"/first option until the questionnaire and guides end.
    let mut child = bin()
        .args(["recommend", "--interactive"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = String::from("maybe\n");
    input.push_str(&"n\n".repeat(2));
    input.push_str(&"1\n".repeat(200));
    child.stdin.take().unwrap().write_all(input.as_bytes()).ok();
    let o = child.wait_with_output().unwrap();
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(o.status.success(), "{err}");
    assert!(err.contains("expected yes or no"), "invalid answer is re-asked");
    assert!(err.contains("why:"));
    let pool = parse(&stdout(&o));
    assert_eq!(pool["category"], "SemS");
    assert_eq!(pool["pending"], json!([]));
}

#[test]
fn interactive_eof_is_input_error() {
    let mut child = bin().args(["recommend", "--interactive"]).stdin(Stdio::piped()).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap();
    child.stdin.take().unwrap().write_all(b"n\n").ok();
    assert_eq!(child.wait().unwrap().code(), Some(2));
}

fn imlc_inputs(dir: &Path) -> (String, String, String) {
    let cases: Vec<_> = [(0.9, 1), (0.8, 1), (0.7, 0), (0.6, 1), (0.4, 0), (0.3, 0), (0.2, 1), (0.1, 0)]
        .iter()
        .enumerate()
        .map(|(i, (s, y))| json!({"id": format!("c{i}"), "reference": y, "prediction": [1.0 - s, s]}))
        .collect();
    let data = put(dir, "d.json", &json!({"task": "ImLC", "classes": ["neg", "pos"], "cases": cases}));
    let pool = put(dir, "p.json", &json!({
        "graph-version": "1.0.0", "category": "ImLC",
        "entries": [{"section": "multi-class", "metric": "BA", "source": "t"},
                    {"section": "multi-threshold", "metric": "AUROC", "source": "t"}],
        "aggregation": {"nan-handling": "worst-value"}
    }));
    let agg = put(dir, "a.json", &json!({"nan-handling": "worst-value", "bootstrap": {"resamples": 200, "alpha": 0.05}}));
    (data, pool, agg)
}

#[test]
fn evaluate_writes_reports_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pool, agg) = imlc_inputs(dir.path());
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    for out in [&out1, &out2] {
        let o = bin()
            .args(["evaluate", "--data", &data, "--pool", &pool, "--agg", &agg, "--out", out.to_str().unwrap()])
            .env("METRICS_RELOADED_SEED", "11")
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("metric,class,value"));
    }
    for f in ["report.json", "results.csv", "per-case.csv"] {
        assert_eq!(std::fs::read(out1.join(f)).unwrap(), std::fs::read(out2.join(f)).unwrap(), "{f}");
    }
    let report = parse(&std::fs::read_to_string(out1.join("report.json")).unwrap());
    assert_eq!(report["seed"], 11);
    assert_eq!(report["seed-source"], "env");
    let ba = report["results"].as_array().unwrap().iter().find(|r| r["metric"] == "BA").unwrap();
    assert_eq!(ba["value"], json!(0.75));
    assert!(ba["ci"].is_array());
    assert!(std::fs::read_dir(out1.join("curves")).unwrap().count() > 0);
}

#[test]
fn evaluate_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, pool, _) = imlc_inputs(dir.path());
    let out = dir.path().join("r");
    let out = out.to_str().unwrap();
    let wrong = put(dir.path(), "w.json", &json!({"graph-version": "1.0.0", "category": "SemS", "entries": [], "aggregation": {"nan-handling": "worst-value"}}));
    assert_eq!(run(&["evaluate", "--data", &data, "--pool", &wrong, "--out", out]).status.code(), Some(2));
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"task\": \"ImLC\",\n  oops\n}").unwrap();
    let o = run(&["evaluate", "--data", broken.to_str().unwrap(), "--pool", &pool, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "line-accurate message");
    let agg = put(dir.path(), "a.json", &json!({"bootstrap": {"resamples": 5, "alpha": 0.05}}));
    assert_eq!(run(&["evaluate", "--data", &data, "--pool", &pool, "--agg", &agg, "--out", out]).status.code(), Some(2));

    // an output path that is a regular file cannot hold the report
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["evaluate", "--data", &data, "--pool", &pool, "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn export_graph_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.json");
    assert!(run(&["export-graph", "--out", g.to_str().unwrap()]).status.success());
    let text = std::fs::read_to_string(&g).unwrap();
    assert_eq!(text, DecisionGraph::standard().to_json());
    let back = DecisionGraph::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
}
