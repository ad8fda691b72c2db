//! Aggregation of per-case metric values: NaN handling, hierarchical means,
//! class aggregation, bootstrap intervals and reporting precision.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::percentile;
use crate::error::{Error, Result};
use crate::model::Value;

pub const SEED_ENV: &str = "METRICS_RELOADED_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NanHandling {
    #[default]
    WorstValue,
    Exclude,
    RankThenAggregateWorstRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassAggregation {
    Macro,
    Weighted,
    PrevalenceWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub resamples: usize,
    pub alpha: f64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { resamples: 1000, alpha: 0.05 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AggregationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_aggregation: Option<ClassAggregation>,
    #[serde(default)]
    pub nan_handling: NanHandling,
    /// Grouping keys, outermost first (e.g. ["patient"]).
    #[serde(default)]
    pub hierarchy: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSpec>,
    #[serde(default)]
    pub worst_values: BTreeMap<String, f64>,
}

impl AggregationSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.class_weights {
            if w.values().any(|&x| !(x >= 0.0)) || (w.values().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("class weights must be non-negative and sum to 1"));
            }
        }
        if let Some(b) = &self.bootstrap {
            if b.resamples < 100 {
                return Err(Error::invalid("bootstrap needs at least 100 resamples"));
            }
            if !(b.alpha > 0.0 && b.alpha < 1.0) {
                return Err(Error::invalid("bootstrap alpha must lie in (0,1)"));
            }
        }
        Ok(())
    }
}

/// One per-case value with its group path (same length as the hierarchy).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseValue {
    pub value: Value,
    #[serde(default)]
    pub groups: Vec<String>,
    /// Case-specific worst value (e.g. the image diagonal for HD).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
}

impl CaseValue {
    pub fn new(value: Value) -> Self {
        Self { value, groups: Vec::new(), worst: None }
    }

    pub fn num(v: f64) -> Self {
        Self::new(Value::Num(v))
    }

    pub fn in_group(mut self, g: &str) -> Self {
        self.groups.push(g.to_string());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AggregateReport {
    pub metric: String,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    pub n_cases: usize,
    pub n_excluded: usize,
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Seed from the environment, or 0. Returns (seed, source).
pub fn seed_from_env() -> (u64, &'static str) {
    match std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()) {
        Some(s) => (s, "env"),
        None => (0, "default"),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Means of each outermost group, each itself a hierarchical mean.
fn outer_means(items: &[(&[String], f64)], depth: usize, levels: usize) -> Vec<f64> {
    if depth == levels {
        return items.iter().map(|x| x.1).collect();
    }
    let mut groups: BTreeMap<&str, Vec<(&[String], f64)>> = BTreeMap::new();
    for &(path, v) in items {
        groups.entry(path[depth].as_str()).or_default().push((path, v));
    }
    groups.values().map(|g| mean(&outer_means(g, depth + 1, levels))).collect()
}

/// Innermost-first hierarchical mean over the given levels.
pub fn hierarchical_mean(values: &[(Vec<String>, f64)], levels: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::undefined("nothing to aggregate"));
    }
    if values.iter().any(|(p, _)| p.len() < levels) {
        return Err(Error::invalid("case is missing a grouping key"));
    }
    let items: Vec<(&[String], f64)> = values.iter().map(|(p, v)| (p.as_slice(), *v)).collect();
    Ok(mean(&outer_means(&items, 0, levels)))
}

/// Percentile bootstrap over resampled top-level units. Resample `b` uses
/// ChaCha8 seeded with `seed` on stream `b`. The interval is widened to
/// contain `point` when sampling noise leaves it outside.
pub fn bootstrap_ci(units: &[f64], point: f64, spec: &BootstrapSpec, seed: u64) -> (f64, f64) {
    let n = units.len();
    let stats: Vec<f64> = (0..spec.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            (0..n).map(|_| units[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    let lo = percentile(&stats, 100.0 * spec.alpha / 2.0);
    let hi = percentile(&stats, 100.0 * (1.0 - spec.alpha / 2.0));
    (lo.min(point), hi.max(point))
}

/// Aggregate per-case values of one metric.
/// `default_worst` is the catalog's worst value for the metric, if bounded.
pub fn aggregate(metric: &str, cases: &[CaseValue], spec: &AggregationSpec, default_worst: Option<f64>, seed: u64) -> Result<AggregateReport> {
    spec.validate()?;
    let levels = spec.hierarchy.len();
    let mut kept: Vec<(Vec<String>, f64)> = Vec::with_capacity(cases.len());
    let mut excluded = 0;
    let mut warnings = Vec::new();
    for c in cases {
        if c.groups.len() < levels {
            return Err(Error::invalid(format!("case lacks grouping keys for hierarchy {:?}", spec.hierarchy)));
        }
        match (&c.value, spec.nan_handling) {
            (Value::Num(v), _) => kept.push((c.groups.clone(), *v)),
            (Value::Excluded { .. }, NanHandling::Exclude) => excluded += 1,
            (Value::Excluded { .. }, NanHandling::WorstValue) => {
                let w = c
                    .worst
                    .or_else(|| spec.worst_values.get(metric).copied())
                    .or(default_worst)
                    .ok_or_else(|| Error::invalid(format!("{metric}: worst-value handling needs an explicit worst value")))?;
                excluded += 1;
                kept.push((c.groups.clone(), w));
            }
            (Value::Excluded { .. }, NanHandling::RankThenAggregateWorstRank) => {
                return Err(Error::Incompatible("rank-then-aggregate compares algorithms; use rank_then_aggregate".into()))
            }
        }
    }
    let mut params = BTreeMap::new();
    params.insert("nan-handling".into(), serde_json::to_value(spec.nan_handling).unwrap());
    params.insert("hierarchy".into(), serde_json::to_value(&spec.hierarchy).unwrap());
    if kept.is_empty() {
        return Ok(AggregateReport {
            metric: metric.to_string(),
            value: Value::excluded("every case was excluded"),
            ci: None,
            n_cases: cases.len(),
            n_excluded: excluded,
            params,
            warnings,
        });
    }
    let value = hierarchical_mean(&kept, levels)?;
    let mut ci = None;
    if let Some(b) = &spec.bootstrap {
        let items: Vec<(&[String], f64)> = kept.iter().map(|(p, v)| (p.as_slice(), *v)).collect();
        let units = if levels == 0 { items.iter().map(|x| x.1).collect() } else { outer_means(&items, 0, levels) };
        if units.len() < 2 {
            warnings.push("bootstrap skipped: fewer than two top-level units".into());
        } else {
            ci = Some(bootstrap_ci(&units, value, b, seed));
            params.insert("bootstrap-seed".into(), seed.into());
            params.insert("bootstrap-resamples".into(), b.resamples.into());
            params.insert("bootstrap-alpha".into(), b.alpha.into());
        }
    }
    Ok(AggregateReport { metric: metric.to_string(), value: Value::Num(value), ci, n_cases: cases.len(), n_excluded: excluded, params, warnings })
}

/// Combine per-class values. `weights` are importance weights for
/// [`ClassAggregation::Weighted`] or class prevalences for prevalence weighting.
pub fn aggregate_classes(per_class: &BTreeMap<String, f64>, mode: ClassAggregation, weights: Option<&BTreeMap<String, f64>>) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::undefined("no class values"));
    }
    match mode {
        ClassAggregation::Macro => Ok(per_class.values().sum::<f64>() / per_class.len() as f64),
        ClassAggregation::Weighted | ClassAggregation::PrevalenceWeighted => {
            let w = weights.ok_or_else(|| Error::invalid("weighted class aggregation needs weights"))?;
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, v) in per_class {
                let wk = *w.get(k).ok_or_else(|| Error::invalid(format!("no weight for class {k}")))?;
                num += wk * v;
                den += wk;
            }
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(Error::undefined("class weights sum to zero"))
            }
        }
    }
}

/// Mean rank per algorithm (rank 1 = best). Ties share the mean rank;
/// excluded values get the worst rank for that case.
pub fn rank_then_aggregate(per_algorithm: &BTreeMap<String, Vec<Value>>, higher_is_better: bool) -> Result<BTreeMap<String, f64>> {
    let names: Vec<&String> = per_algorithm.keys().collect();
    let n_cases = per_algorithm.values().next().map_or(0, |v| v.len());
    if names.is_empty() || n_cases == 0 {
        return Err(Error::invalid("rank aggregation needs algorithms and cases"));
    }
    if per_algorithm.values().any(|v| v.len() != n_cases) {
        return Err(Error::invalid("algorithms differ in case count"));
    }
    let a = names.len();
    let mut sums = vec![0.0; a];
    for case in 0..n_cases {
        let vals: Vec<Option<f64>> = names.iter().map(|n| per_algorithm[*n][case].num()).collect();
        for i in 0..a {
            sums[i] += match vals[i] {
                None => a as f64,
                Some(v) => {
                    let better = vals
                        .iter()
                        .filter(|o| o.is_some_and(|x| if higher_is_better { x > v } else { x < v }))
                        .count();
                    let ties = vals.iter().filter(|o| **o == Some(v)).count();
                    better as f64 + (ties as f64 + 1.0) / 2.0
                }
            };
        }
    }
    Ok(names.into_iter().zip(sums).map(|(n, s)| (n.clone(), s / n_cases as f64)).collect())
}

/// Two decimals by default, one when reference variability is high.
pub fn decimal_report(value: &Value, high_variability: bool) -> String {
    match value {
        Value::Num(v) if high_variability => format!("{v:.1}"),
        Value::Num(v) => format!("{v:.2}"),
        Value::Excluded { excluded } => format!("n/a (excluded: {excluded})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nan: NanHandling) -> AggregationSpec {
        AggregationSpec { nan_handling: nan, ..Default::default() }
    }

    #[test]
    fn missing_value_handling() {
        let cases = vec![CaseValue::num(0.8), CaseValue::new(Value::excluded("empty reference"))];
        let w = aggregate("DSC", &cases, &spec(NanHandling::WorstValue), Some(0.0), 0).unwrap();
        let e = aggregate("DSC", &cases, &spec(NanHandling::Exclude), Some(0.0), 0).unwrap();
        assert_eq!(w.value, Value::Num(0.4));
        assert_eq!(e.value, Value::Num(0.8));
        assert_eq!(e.n_excluded, 1);
        assert!(aggregate("EC", &cases, &spec(NanHandling::WorstValue), None, 0).is_err());
    }

    #[test]
    fn hierarchy_vs_flat() {
        let cases = vec![CaseValue::num(1.0).in_group("p1"), CaseValue::num(1.0).in_group("p1"), CaseValue::num(0.0).in_group("p2")];
        let flat = aggregate("DSC", &cases, &spec(NanHandling::Exclude), None, 0).unwrap();
        let mut h = spec(NanHandling::Exclude);
        h.hierarchy = vec!["patient".into()];
        let hier = aggregate("DSC", &cases, &h, None, 0).unwrap();
        assert!((flat.value.num().unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hier.value, Value::Num(0.5));
    }

    #[test]
    fn bootstrap_contains_point_and_is_seeded() {
        let cases: Vec<CaseValue> = (0..30).map(|i| CaseValue::num((i % 7) as f64 / 7.0)).collect();
        let mut s = spec(NanHandling::Exclude);
        s.bootstrap = Some(BootstrapSpec::default());
        let a = aggregate("DSC", &cases, &s, None, 42).unwrap();
        let b = aggregate("DSC", &cases, &s, None, 42).unwrap();
        let (lo, hi) = a.ci.unwrap();
        let v = a.value.num().unwrap();
        assert!(lo <= v && v <= hi);
        assert_eq!(a, b);
    }

    #[test]
    fn ranks() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), vec![Value::Num(0.9), Value::Num(0.5)]);
        m.insert("b".to_string(), vec![Value::Num(0.9), Value::excluded("x")]);
        m.insert("c".to_string(), vec![Value::Num(0.1), Value::Num(0.7)]);
        let r = rank_then_aggregate(&m, true).unwrap();
        assert_eq!(r["a"], (1.5 + 2.0) / 2.0);
        assert_eq!(r["b"], (1.5 + 3.0) / 2.0);
        assert_eq!(r["c"], (3.0 + 1.0) / 2.0);
    }

    #[test]
    fn class_aggregation() {
        let v: BTreeMap<String, f64> = [("a".to_string(), 0.2), ("b".to_string(), 0.6)].into();
        let eq: BTreeMap<String, f64> = [("a".to_string(), 0.5), ("b".to_string(), 0.5)].into();
        let m = aggregate_classes(&v, ClassAggregation::Macro, None).unwrap();
        assert_eq!(m, aggregate_classes(&v, ClassAggregation::Weighted, Some(&eq)).unwrap());
    }

    #[test]
    fn decimals() {
        assert_eq!(decimal_report(&Value::Num(0.856), false), "0.86");
        assert_eq!(decimal_report(&Value::Num(0.856), true), "0.9");
        assert_eq!(decimal_report(&Value::excluded("empty"), false), "n/a (excluded: empty)");
    }
}
