//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes and returns JSON text. The plain functions in [`api`]
//! carry the logic so they can be tested off the browser.

use wasm_bindgen::prelude::*;

pub mod api {
    use std::collections::BTreeMap;

    use serde::Deserialize;
    use serde_json::{json, Value};
    use valmetric::counting::{
        self, accuracy, balanced_accuracy, counts_at_threshold, expected_cost, f_beta, mcc, ppv, sensitivity, specificity,
        weighted_cohens_kappa, CostMatrix, KappaWeights,
    };
    use valmetric::model::{ConfusionMatrix, Fingerprint, ProblemCategory, ScoredSample, ITEMS};
    use valmetric::recommend::{recommend_with, DecisionGraph};
    use valmetric::threshold::{auroc, average_precision, pr_curve, roc_curve};
    use valmetric::{Error, Result};

    fn parse<T: for<'de> Deserialize<'de>>(what: &str, s: &str) -> Result<T> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("{what}: {e}")))
    }

    /// Undefined values become `null`; anything else propagates.
    fn opt(r: Result<f64>) -> Result<Value> {
        match r {
            Ok(v) => Ok(json!(v)),
            Err(e) if e.is_undefined() => Ok(Value::Null),
            Err(e) => Err(e),
        }
    }

    #[derive(Deserialize)]
    struct Scored {
        scores: Vec<f64>,
        labels: Vec<u8>,
    }

    /// Binary view as two-class samples: positive score `s`, negative `1 - s`.
    fn samples(input: &str) -> Result<Vec<ScoredSample>> {
        let s: Scored = parse("scores", input)?;
        if s.scores.len() != s.labels.len() {
            return Err(Error::invalid("scores and labels differ in length"));
        }
        if s.labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        Ok(s.scores.iter().zip(&s.labels).map(|(&x, &l)| ScoredSample::new(vec![1.0 - x, x], l as usize)).collect())
    }

    /// `{scores, labels}` -> ROC and PR curves with AUROC and AP.
    pub fn roc_pr(input: &str) -> Result<String> {
        let s = samples(input)?;
        let n_pos = s.iter().filter(|x| x.reference == 1).count();
        Ok(json!({
            "roc": roc_curve(&s, 1)?,
            "pr": pr_curve(&s, 1)?,
            "auroc": auroc(&s, 1)?,
            "ap": average_precision(&s, 1)?,
            "prevalence": n_pos as f64 / s.len() as f64,
        })
        .to_string())
    }

    /// Counts and per-class metrics when calling `score >= threshold` positive.
    pub fn operating_point(input: &str, threshold: f64) -> Result<String> {
        let c = counts_at_threshold(&samples(input)?, 1, threshold);
        Ok(json!({
            "tp": c.tp, "fp": c.fp, "fn": c.fn_, "tn": c.tn,
            "sensitivity": opt(sensitivity(&c))?,
            "specificity": opt(specificity(&c))?,
            "ppv": opt(ppv(&c))?,
            "f1": opt(f_beta(&c, 1.0))?,
        })
        .to_string())
    }

    #[derive(Deserialize)]
    struct Table {
        /// Rows: reference class, columns: predicted class.
        matrix: Vec<Vec<u64>>,
        #[serde(default)]
        labels: Option<Vec<String>>,
        #[serde(default)]
        costs: Option<Vec<Vec<f64>>>,
    }

    /// `{matrix, labels?, costs?}` -> multi-class and per-class counting metrics.
    pub fn confusion_metrics(input: &str) -> Result<String> {
        let t: Table = parse("confusion table", input)?;
        let cm = ConfusionMatrix::new(t.matrix, t.labels)?;
        let k = cm.n_classes();
        let costs = match t.costs {
            Some(c) => CostMatrix::new(c, None)?,
            None => CostMatrix::zero_one(k),
        };
        let mut per_class = BTreeMap::new();
        for (i, label) in cm.labels().iter().enumerate() {
            let c = cm.one_vs_rest(i);
            per_class.insert(
                label.clone(),
                json!({
                    "sensitivity": opt(sensitivity(&c))?,
                    "ppv": opt(ppv(&c))?,
                    "f1": opt(f_beta(&c, 1.0))?,
                    "prevalence": cm.row_sum(i) as f64 / cm.total().max(1) as f64,
                }),
            );
        }
        Ok(json!({
            "accuracy": opt(accuracy(&cm))?,
            "balanced-accuracy": opt(balanced_accuracy(&cm))?,
            "mcc": opt(mcc(&cm))?,
            "expected-cost": opt(expected_cost(&cm, &costs, false))?,
            "normalized-expected-cost": opt(expected_cost(&cm, &costs, true))?,
            "linear-kappa": opt(weighted_cohens_kappa(&cm, &KappaWeights::linear(k)))?,
            "prevalences": counting::prevalences(&cm)?,
            "per-class": per_class,
        })
        .to_string())
    }

    /// Item descriptors the page needs to render a fingerprint form for a category.
    pub fn items(category: &str) -> Result<String> {
        let c: ProblemCategory =
            serde_json::from_value(Value::String(category.into())).map_err(|e| Error::Schema(format!("category: {e}")))?;
        let keys = DecisionGraph::standard().relevant_items(c);
        let specs: Vec<_> = ITEMS.iter().filter(|s| keys.iter().any(|k| k == s.key)).collect();
        serde_json::to_string(&specs).map_err(|e| Error::Computation(e.to_string()))
    }

    /// Fingerprint JSON plus `{guide-id: option}` choices -> pool JSON.
    pub fn recommend(fingerprint: &str, guides: &str) -> Result<String> {
        let fp = Fingerprint::from_json(parse("fingerprint", fingerprint)?)?;
        let choices: BTreeMap<String, String> = if guides.trim().is_empty() { BTreeMap::new() } else { parse("guides", guides)? };
        Ok(recommend_with(DecisionGraph::standard(), &fp, &choices)?.pool.to_json())
    }
}

fn js(r: valmetric::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = rocPr)]
pub fn roc_pr(input: &str) -> Result<String, JsError> {
    js(api::roc_pr(input))
}

#[wasm_bindgen(js_name = operatingPoint)]
pub fn operating_point(input: &str, threshold: f64) -> Result<String, JsError> {
    js(api::operating_point(input, threshold))
}

#[wasm_bindgen(js_name = confusionMetrics)]
pub fn confusion_metrics(input: &str) -> Result<String, JsError> {
    js(api::confusion_metrics(input))
}

#[wasm_bindgen(js_name = fingerprintItems)]
pub fn items(category: &str) -> Result<String, JsError> {
    js(api::items(category))
}

#[wasm_bindgen]
pub fn recommend(fingerprint: &str, guides: &str) -> Result<String, JsError> {
    js(api::recommend(fingerprint, guides))
}
