mod common;

use axum::http::StatusCode;
use common::{call, complete_session, parse};
use serde_json::json;
use valmetric::model::Fingerprint;
use valmetric::recommend::{recommend_with, DecisionGraph, MetricPool, Session, TranscriptEntry};
use valmetric_cli::server::router;

#[tokio::test]
async fn new_session_starts_at_category_mapping() {
    let app = router();
    let (st, body) = call(&app, "POST", "/session", None).await;
    assert_eq!(st, StatusCode::CREATED);
    let v = parse(&body);
    let expected = Session::new().next_question(DecisionGraph::standard()).unwrap().unwrap();
    assert_eq!(v["question"]["item"], json!(expected.item));
    assert_eq!(v["question"]["subprocess"], json!("S1"));
    assert!(v["question"]["why"].as_str().is_some_and(|w| !w.is_empty()));
    assert_eq!(v["complete"], json!(false));
}

#[tokio::test]
async fn scripted_dialogue_matches_library() {
    let app = router();
    let (id, state) = complete_session(&app).await;
    let transcript: Vec<TranscriptEntry> = serde_json::from_value(state["transcript"].clone()).unwrap();
    let s = Session::replay(DecisionGraph::standard(), &transcript).unwrap();

    let (st, pool) = call(&app, "GET", &format!("/session/{id}/pool"), None).await;
    assert_eq!(st, StatusCode::OK, "{pool}");
    let lib = recommend_with(DecisionGraph::standard(), s.fingerprint(), &Default::default()).unwrap().pool;
    assert_eq!(pool, lib.to_json());
    assert_eq!(lib.category.as_str(), "SemS");
    assert!(lib.pending_guide("DG6.1").is_some());

    // resolve the overlap guide
    let (st, body) = call(&app, "POST", &format!("/session/{id}/guide"), Some(json!({"guide": "DG6.1", "option": "DSC"}))).await;
    assert_eq!(st, StatusCode::OK, "{body}");
    let (_, pool) = call(&app, "GET", &format!("/session/{id}/pool"), None).await;
    let p = MetricPool::from_json(&pool).unwrap();
    assert!(p.has("DSC") && p.pending_guide("DG6.1").is_none());

    // the fingerprint alone gives the same pool as the session before guides
    let fp: Fingerprint = serde_json::from_value(s.fingerprint().to_json()).unwrap();
    assert_eq!(valmetric::recommend::recommend(&fp).unwrap(), lib);
}

#[tokio::test]
async fn session_error_codes() {
    let app = router();
    let (st, _) = call(&app, "GET", "/session/nope/question", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/session/nope/pool", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let (_, body) = call(&app, "POST", "/session", None).await;
    let id = parse(&body)["id"].as_str().unwrap().to_string();
    let uri = format!("/session/{id}/answer");
    // an item the frontier is not asking for
    let (st, body) = call(&app, "POST", &uri, Some(json!({"item": "FP2.5.7", "value": true}))).await;
    assert_eq!(st, StatusCode::CONFLICT, "{body}");
    assert_eq!(parse(&body)["error"], "out-of-frontier");
    // malformed body and bad value type
    let (st, _) = call(&app, "POST", &uri, Some(json!({"itm": "S1.1"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let q = parse(&call(&app, "GET", &format!("/session/{id}/question"), None).await.1)["question"]["item"].clone();
    let (st, _) = call(&app, "POST", &uri, Some(json!({"item": q, "value": "maybe"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    // incomplete pool and unknown guide
    let (st, body) = call(&app, "GET", &format!("/session/{id}/pool"), None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(parse(&body)["error"], "missing-items");
    let (st, _) = call(&app, "POST", &format!("/session/{id}/guide"), Some(json!({"guide": "DG6.1", "option": "DSC"}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    // a bad fingerprint on creation
    let (st, _) = call(&app, "POST", "/session", Some(json!({"fingerprint": {"FP1.1": "Nope"}}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn graph_and_cheatsheet() {
    let app = router();
    let (st, g) = call(&app, "GET", "/graph", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(g, DecisionGraph::standard().to_json());
    assert!(DecisionGraph::from_json(&g).is_ok());

    let (st, body) = call(&app, "GET", "/metrics/DSC/cheatsheet", None).await;
    assert_eq!(st, StatusCode::OK);
    let c = parse(&body);
    assert_eq!(c["range"], json!([0.0, 1.0]));
    assert_eq!(c["categories"], json!(["SemS", "InS"]));
    assert!(c["definition"].as_str().is_some_and(|d| !d.is_empty()));
    let (st, _) = call(&app, "GET", "/metrics/NOPE/cheatsheet", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

fn seg_request() -> serde_json::Value {
    let m = json!({"shape": [4, 4], "values": [[0,0,0,0],[0,1,1,0],[0,1,1,0],[0,0,0,0]]});
    json!({
        "dataset": {"task": "SemS", "classes": ["liver"], "cases": [{"id": "a", "reference": m, "prediction": m}]},
        "pool": {
            "graph-version": "1.0.0", "category": "SemS",
            "entries": [{"section": "overlap", "metric": "DSC", "source": "test"},
                        {"section": "boundary", "metric": "NSD", "params": {"tau": 1.0}, "source": "test"}],
            "aggregation": {"nan-handling": "worst-value"}
        }
    })
}

#[tokio::test]
async fn evaluate_endpoint_is_idempotent() {
    let app = router();
    let (st, a) = call(&app, "POST", "/evaluate", Some(seg_request())).await;
    assert_eq!(st, StatusCode::OK, "{a}");
    let (_, b) = call(&app, "POST", "/evaluate", Some(seg_request())).await;
    assert_eq!(a, b);
    let r = parse(&a);
    let value = |m: &str| r["results"].as_array().unwrap().iter().find(|x| x["metric"] == m).unwrap()["value"].clone();
    assert_eq!(value("DSC"), json!(1.0));
    assert_eq!(value("NSD"), json!(1.0));

    let mut bad = seg_request();
    bad["pool"]["category"] = json!("ObD");
    let (st, body) = call(&app, "POST", "/evaluate", Some(bad)).await;
    assert_eq!(st, StatusCode::BAD_REQUEST, "{body}");
    let (st, _) = call(&app, "POST", "/evaluate", Some(json!({"dataset": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_are_independent() {
    let app = router();
    let runs: Vec<_> = (0..8).map(|_| {
        let app = app.clone();
        tokio::spawn(async move {
            let (id, _) = complete_session(&app).await;
            call(&app, "GET", &format!("/session/{id}/pool"), None).await.1
        })
    }).collect();
    let mut pools = Vec::new();
    for r in runs {
        pools.push(r.await.unwrap());
    }
    assert!(pools.windows(2).all(|w| w[0] == w[1]));
}
