use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A metric value or the excluded marker (serialized as `{"excluded": reason}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Excluded { excluded: String },
}

impl Value {
    pub fn excluded(reason: impl Into<String>) -> Self {
        Value::Excluded { excluded: reason.into() }
    }

    pub fn num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Excluded { .. } => None,
        }
    }

    pub fn is_excluded(&self) -> bool {
        matches!(self, Value::Excluded { .. })
    }
}

impl From<crate::Result<f64>> for Value {
    /// Only `Undefined` is a legitimate exclusion; other errors are kept as
    /// their message so nothing is silently swallowed.
    fn from(r: crate::Result<f64>) -> Self {
        match r {
            Ok(v) => Value::Num(v),
            Err(Error::Undefined(why)) => Value::excluded(why),
            Err(e) => Value::excluded(e.to_string()),
        }
    }
}

/// One computed metric with everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub value: Value,
    #[serde(default, rename = "per-class", skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

impl MetricResult {
    pub fn new(metric: impl Into<String>, value: Value) -> Self {
        Self {
            metric: metric.into(),
            value,
            per_class: None,
            params: BTreeMap::new(),
            provenance: Vec::new(),
        }
    }

    pub fn with_param(mut self, key: &str, v: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), v.into());
        self
    }
}
