use serde_json::{json, Value};
use valmetric::model::Fingerprint;
use valmetric::recommend::{recommend, DecisionGraph};
use valmetric_wasm::api;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn roc_pr_matches_pairwise_auroc() {
    let scores = [0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1];
    let labels = [1, 1, 0, 1, 0, 0, 1, 0];
    let v = parse(&api::roc_pr(&json!({"scores": scores, "labels": labels}).to_string()).unwrap());
    // 16 positive-negative pairs, 12 ranked correctly
    assert!((v["auroc"].as_f64().unwrap() - 12.0 / 16.0).abs() < 1e-12);
    let roc = v["roc"]["points"].as_array().unwrap();
    assert_eq!(roc.first().unwrap(), &json!([0.0, 0.0]));
    assert_eq!(roc.last().unwrap(), &json!([1.0, 1.0]));
    assert_eq!(v["prevalence"], json!(0.5));
    // AP: precision at each positive = 1, 1, 3/4, 4/7
    let ap = (1.0 + 1.0 + 0.75 + 4.0 / 7.0) / 4.0;
    assert!((v["ap"].as_f64().unwrap() - ap).abs() < 1e-12);
}

#[test]
fn operating_point_counts() {
    let input = json!({"scores": [0.9, 0.8, 0.7, 0.6, 0.4], "labels": [1, 0, 1, 0, 1]}).to_string();
    let v = parse(&api::operating_point(&input, 0.65).unwrap());
    assert_eq!((v["tp"].clone(), v["fp"].clone(), v["fn"].clone(), v["tn"].clone()), (json!(2), json!(1), json!(1), json!(1)));
    assert!((v["f1"].as_f64().unwrap() - 4.0 / 6.0).abs() < 1e-12);
    // nothing called positive: PPV undefined
    let v = parse(&api::operating_point(&input, 2.0).unwrap());
    assert!(v["ppv"].is_null());
    assert!(api::operating_point(&json!({"scores": [0.1], "labels": [2]}).to_string(), 0.5).is_err());
    assert!(api::roc_pr(&json!({"scores": [0.1, 0.2], "labels": [1]}).to_string()).is_err());
}

#[test]
fn confusion_metrics_on_a_binary_table() {
    // rows reference, columns prediction: TN 40, FP 10, FN 5, TP 45
    let v = parse(&api::confusion_metrics(&json!({"matrix": [[40, 10], [5, 45]], "labels": ["neg", "pos"]}).to_string()).unwrap());
    assert!((v["accuracy"].as_f64().unwrap() - 0.85).abs() < 1e-12);
    assert!((v["balanced-accuracy"].as_f64().unwrap() - 0.85).abs() < 1e-12);
    let mcc = (45.0 * 40.0 - 10.0 * 5.0) / ((55.0f64 * 50.0 * 50.0 * 45.0).sqrt());
    assert!((v["mcc"].as_f64().unwrap() - mcc).abs() < 1e-12);
    assert!((v["expected-cost"].as_f64().unwrap() - 0.15).abs() < 1e-12);
    assert!((v["per-class"]["pos"]["sensitivity"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!(api::confusion_metrics(&json!({"matrix": [[1, 2]]}).to_string()).is_err());
}

#[test]
fn recommend_matches_library() {
    let g = DecisionGraph::standard();
    let items: Vec<Value> = serde_json::from_str(&api::items("SemS").unwrap()).unwrap();
    assert!(!items.is_empty());
    let mut fp = json!({"FP1.1": "SemS"});
    for it in &items {
        let key = it["key"].as_str().unwrap();
        if key == "FP1.1" {
            continue;
        }
        fp[key] = match it["domain"]["type"].as_str().unwrap() {
            "bool" => json!(false),
            "count" => json!(it["domain"]["min"].as_u64().unwrap().max(2)),
            _ => it["domain"]["options"][0].clone(),
        };
    }
    let pool = api::recommend(&fp.to_string(), "").unwrap();
    let lib = recommend(&Fingerprint::from_json(fp.clone()).unwrap()).unwrap();
    assert_eq!(pool, lib.to_json());
    assert_eq!(lib.graph_version, g.version);

    let guided = parse(&api::recommend(&fp.to_string(), r#"{"DG6.1": "IoU"}"#).unwrap());
    assert!(guided["entries"].as_array().unwrap().iter().any(|e| e["metric"] == "IoU"));
    assert!(api::recommend(r#"{"FP1.1": "SemS"}"#, "").unwrap_err().to_string().contains("missing"));
    assert!(api::items("Nope").is_err());
}
