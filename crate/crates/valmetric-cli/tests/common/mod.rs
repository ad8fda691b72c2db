#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("{e}: {s}"))
}

/// Scripted answer for a question descriptor: a SemS liver-style dialogue.
pub fn scripted(q: &Value) -> Value {
    let item = q["item"].as_str().unwrap();
    let overrides = [("S1.1", json!(false)), ("S1.2", json!(false)), ("FP2.1", json!(true)), ("FP2.5.6", json!("distance-outlier-focus"))];
    if let Some((_, v)) = overrides.iter().find(|(k, _)| *k == item) {
        return v.clone();
    }
    match q["domain"]["type"].as_str().unwrap() {
        "bool" => json!(false),
        "count" => json!(q["domain"]["min"].as_u64().unwrap().max(2)),
        "choice" => q["domain"]["options"][0].clone(),
        t => panic!("domain {t}"),
    }
}

/// Drive a fresh session through the scripted dialogue. Returns (id, final question state).
pub async fn complete_session(app: &Router) -> (String, Value) {
    let (st, body) = call(app, "POST", "/session", None).await;
    assert_eq!(st, StatusCode::CREATED, "{body}");
    let mut state = parse(&body);
    let id = state["id"].as_str().unwrap().to_string();
    for _ in 0..200 {
        if state["question"].is_null() {
            return (id, state);
        }
        let q = state["question"].clone();
        let (st, body) =
            call(app, "POST", &format!("/session/{id}/answer"), Some(json!({"item": q["item"], "value": scripted(&q)}))).await;
        assert_eq!(st, StatusCode::OK, "{body}");
        state = parse(&body);
    }
    panic!("dialogue did not terminate");
}
