//! Pool-driven evaluation of a dataset: parse cases, compute every pool
//! metric, apply NaN handling, hierarchical and class aggregation, and
//! bootstrap intervals over top-level units.
//!
//! Dataset-level metrics (confusion-matrix, curve and detection metrics) are
//! statistics of a case subset, so their intervals come from resampling
//! cases (or groups) and recomputing. Per-case metrics go through
//! [`aggregation::aggregate`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::aggregation::{self, AggregateReport, AggregationSpec, CaseValue, ClassAggregation, NanHandling};
use crate::boundary;
use crate::calibration::{self, BinningScheme, CwceWeighting};
use crate::catalog;
use crate::counting::{self, CostMatrix, KappaWeights};
use crate::detection::{self, AssignmentStrategy, CriterionKind, LocalizationCriterion, MatchResult};
use crate::error::{Error, Result};
use crate::model::{
    confusion_from_labels, confusion_from_maps, validate_instances, BinaryCounts, Instance, LabelMap, Location,
    ProblemCategory, ScoredSample, Value,
};
use crate::recommend::{DetectionConfig, MetricPool, PoolEntry, Section, GRAPH_VERSION};
use crate::threshold::{self, ApAggregation, ImageDetections, TargetMetric};

// ---------------------------------------------------------------- input

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Dataset {
    pub task: ProblemCategory,
    /// Class names. Image-level references index this list from 0; label
    /// maps and instances use 1..=C (0 is background).
    pub classes: Vec<String>,
    pub cases: Vec<Case>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_matrix: Option<CostMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Further grouping keys for deeper hierarchies.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, String>,
    pub reference: Json,
    pub prediction: Json,
}

impl Dataset {
    pub fn from_json(s: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(s).map_err(|e| Error::Schema(format!("dataset: {e}")))?;
        if d.cases.is_empty() {
            return Err(Error::Schema("dataset has no cases".into()));
        }
        if d.classes.is_empty() {
            return Err(Error::Schema("dataset lists no classes".into()));
        }
        if d.task == ProblemCategory::ImLC && d.classes.len() < 2 {
            return Err(Error::Schema("image-level classification needs at least two classes".into()));
        }
        Ok(d)
    }

    fn group_path(&self, case: &Case, hierarchy: &[String]) -> Result<Vec<String>> {
        hierarchy
            .iter()
            .map(|k| {
                let v = if k == "group" { case.group.clone().or_else(|| case.groups.get(k).cloned()) } else { case.groups.get(k).cloned() };
                v.ok_or_else(|| Error::Schema(format!("case {}: no value for grouping key {k:?}", case.id)))
            })
            .collect()
    }
}

struct ImageCase {
    reference: usize,
    label: usize,
    scores: Option<Vec<f64>>,
}

fn class_index(v: &Json, classes: &[String], what: &str) -> Result<usize> {
    let k = match v {
        Json::Number(n) => n.as_u64().map(|k| k as usize),
        Json::String(s) => classes.iter().position(|c| c == s),
        _ => None,
    };
    k.filter(|&k| k < classes.len()).ok_or_else(|| Error::Schema(format!("{what}: {v} is not a class")))
}

fn parse_image_case(c: &Case, classes: &[String]) -> Result<ImageCase> {
    let reference = class_index(&c.reference, classes, &format!("case {} reference", c.id))?;
    let scores_of = |v: &Json| -> Result<Vec<f64>> {
        let s: Vec<f64> = serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("case {} scores: {e}", c.id)))?;
        if s.len() != classes.len() {
            return Err(Error::Schema(format!("case {}: {} scores for {} classes", c.id, s.len(), classes.len())));
        }
        Ok(s)
    };
    let (label, scores) = match &c.prediction {
        Json::Array(_) => {
            let s = scores_of(&c.prediction)?;
            (ScoredSample::new(s.clone(), reference).argmax(), Some(s))
        }
        Json::Object(o) => match (o.get("scores"), o.get("label")) {
            (Some(s), label) => {
                let s = scores_of(s)?;
                let l = match label {
                    Some(l) => class_index(l, classes, &format!("case {} label", c.id))?,
                    None => ScoredSample::new(s.clone(), reference).argmax(),
                };
                (l, Some(s))
            }
            (None, Some(l)) => (class_index(l, classes, &format!("case {} label", c.id))?, None),
            (None, None) => return Err(Error::Schema(format!("case {}: prediction needs scores or label", c.id))),
        },
        v => (class_index(v, classes, &format!("case {} prediction", c.id))?, None),
    };
    if let Some(s) = &scores {
        ScoredSample::new(s.clone(), reference).validate().map_err(|e| Error::Schema(format!("case {}: {e}", c.id)))?;
    }
    Ok(ImageCase { reference, label, scores })
}

fn parse_map(v: &Json, what: &str, n_classes: usize) -> Result<LabelMap> {
    let m: LabelMap = serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    m.check_classes(n_classes as u16).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    Ok(m)
}

fn parse_instances(v: &Json, what: &str, n_classes: usize) -> Result<Vec<Instance>> {
    let v = v.get("instances").unwrap_or(v);
    let inst: Vec<Instance> = serde_json::from_value(v.clone()).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    validate_instances(&inst, None).map_err(|e| Error::Schema(format!("{what}: {e}")))?;
    if let Some(i) = inst.iter().find(|i| i.class == 0 || i.class as usize > n_classes) {
        return Err(Error::Schema(format!("{what}: instance class {} outside 1..={n_classes}", i.class)));
    }
    Ok(inst)
}

// ---------------------------------------------------------------- output

/// One row of the per-case table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub case: String,
    pub class: String,
    pub metric: String,
    pub value: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Report {
    pub graph_version: String,
    pub category: ProblemCategory,
    pub classes: Vec<String>,
    pub n_cases: usize,
    pub seed: u64,
    pub seed_source: String,
    pub aggregation: AggregationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionConfig>,
    pub results: Vec<AggregateReport>,
    pub warnings: Vec<String>,
    /// Curve and reliability tables as CSV text, keyed by file stem.
    #[serde(skip)]
    pub curves: BTreeMap<String, String>,
    #[serde(skip)]
    pub per_case: Vec<CaseRow>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn result(&self, metric: &str, class: Option<&str>) -> Option<&AggregateReport> {
        self.results.iter().find(|r| r.metric == metric && r.params.get("class").and_then(|c| c.as_str()) == class)
    }

    pub fn results_csv(&self) -> String {
        let mut s = String::from("metric,class,value,ci_low,ci_high,n_cases,n_excluded\n");
        for r in &self.results {
            let class = r.params.get("class").and_then(|c| c.as_str()).unwrap_or("");
            let v = r.value.num().map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
            let (lo, hi) = r.ci.map(|(a, b)| (a.to_string(), b.to_string())).unwrap_or_default();
            s.push_str(&format!("{},{},{v},{lo},{hi},{},{}\n", csv_field(&r.metric), csv_field(class), r.n_cases, r.n_excluded));
        }
        s
    }

    pub fn per_case_csv(&self) -> String {
        let mut s = String::from("case,class,metric,value\n");
        for r in &self.per_case {
            let v = r.value.num().map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
            s.push_str(&format!("{},{},{},{v}\n", csv_field(&r.case), csv_field(&r.class), csv_field(&r.metric)));
        }
        s
    }

    /// Write report.json, results.csv, per-case.csv and curves/*.csv.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |e: std::io::Error| Error::Computation(format!("writing {}: {e}", dir.display()));
        fs::create_dir_all(dir.join("curves")).map_err(io)?;
        let mut out = Vec::new();
        let mut put = |p: PathBuf, text: &str| -> Result<()> {
            fs::write(&p, text).map_err(io)?;
            out.push(p);
            Ok(())
        };
        put(dir.join("report.json"), &self.to_json())?;
        put(dir.join("results.csv"), &self.results_csv())?;
        put(dir.join("per-case.csv"), &self.per_case_csv())?;
        for (name, csv) in &self.curves {
            put(dir.join("curves").join(format!("{}.csv", file_stem(name))), csv)?;
        }
        Ok(out)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}

// ---------------------------------------------------------------- params

fn p_f64(e: &PoolEntry, key: &str, default: f64) -> Result<f64> {
    match e.params.get(key) {
        None => Ok(default),
        Some(v) => v.as_f64().ok_or_else(|| Error::Schema(format!("{}: parameter {key} must be a number", e.metric))),
    }
}

fn p_str<'a>(e: &'a PoolEntry, key: &str, default: &'a str) -> Result<&'a str> {
    match e.params.get(key) {
        None => Ok(default),
        Some(v) => v.as_str().ok_or_else(|| Error::Schema(format!("{}: parameter {key} must be a string", e.metric))),
    }
}

fn p_bool(e: &PoolEntry, key: &str, default: bool) -> Result<bool> {
    match e.params.get(key) {
        None => Ok(default),
        Some(v) => v.as_bool().ok_or_else(|| Error::Schema(format!("{}: parameter {key} must be a boolean", e.metric))),
    }
}

fn p_target(e: &PoolEntry) -> Result<Option<(TargetMetric, f64)>> {
    let Some(t) = e.params.get("target") else { return Ok(None) };
    let t: TargetMetric = serde_json::from_value(t.clone()).map_err(|_| Error::Schema(format!("{}: unknown target {t}", e.metric)))?;
    Ok(Some((t, p_f64(e, "target-value", 0.95)?)))
}

fn target_metric(id: &str) -> Result<TargetMetric> {
    serde_json::from_value(Json::String(id.into())).map_err(|_| Error::Incompatible(format!("{id} cannot be read at an operating point")))
}

// ---------------------------------------------------------------- engine

type Stat<'a> = Box<dyn Fn(&[usize]) -> Result<f64> + Send + Sync + 'a>;

/// One class-specific statistic of a metric.
struct ClassStat<'a> {
    class: String,
    stat: Stat<'a>,
    /// Per-case values, when the metric is computed per case.
    cases: Option<(usize, usize)>,
}

struct Engine {
    spec: AggregationSpec,
    seed: u64,
    /// Case indices of each top-level resampling unit.
    units: Vec<Vec<usize>>,
    n_cases: usize,
    class_mode: ClassAggregation,
    prevalence: BTreeMap<String, f64>,
    results: Vec<AggregateReport>,
    warnings: Vec<String>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    boundary::percentile(sorted, 100.0 * q)
}

type StatRef<'s> = &'s (dyn Fn(&[usize]) -> Result<f64> + Sync);

impl Engine {
    fn warn(&mut self, w: impl Into<String>) {
        let w = w.into();
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    fn all(&self) -> Vec<usize> {
        (0..self.n_cases).collect()
    }

    /// Percentile bootstrap over top-level units; resample `r` uses ChaCha8
    /// seeded with the run seed on stream `r`. Widened to contain `point`.
    fn resample_ci(&self, metric: &str, stat: StatRef<'_>, point: f64) -> (Option<(f64, f64)>, Option<String>) {
        let Some(b) = self.spec.bootstrap else { return (None, None) };
        let n = self.units.len();
        if n < 2 {
            return (None, Some(format!("{metric}: bootstrap skipped, fewer than two top-level units")));
        }
        let units = &self.units;
        let seed = self.seed;
        let mut s: Vec<f64> = (0..b.resamples)
            .into_par_iter()
            .filter_map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                let idx: Vec<usize> = (0..n).flat_map(|_| units[rng.random_range(0..n)].iter().copied()).collect();
                stat(&idx).ok().filter(|v| v.is_finite())
            })
            .collect();
        if s.len() < b.resamples / 2 {
            return (None, Some(format!("{metric}: bootstrap skipped, statistic undefined on most resamples")));
        }
        let note = (s.len() < b.resamples).then(|| format!("{metric}: {} bootstrap resamples undefined and dropped", b.resamples - s.len()));
        s.sort_by(f64::total_cmp);
        let lo = quantile(&s, b.alpha / 2.0);
        let hi = quantile(&s, 1.0 - b.alpha / 2.0);
        (Some((lo.min(point), hi.max(point))), note)
    }

    fn ci(&mut self, metric: &str, stat: StatRef<'_>, point: f64) -> Option<(f64, f64)> {
        let (ci, note) = self.resample_ci(metric, stat, point);
        if let Some(n) = note {
            self.warn(n);
        }
        ci
    }

    fn worst(&self, metric: &str) -> Option<f64> {
        self.spec.worst_values.get(metric).copied().or_else(|| catalog::metric(metric).and_then(|m| m.worst_value()))
    }

    /// Class combination with the NaN policy applied to excluded classes.
    fn combine(&self, metric: &str, per: &BTreeMap<String, Result<f64>>) -> Result<f64> {
        let mut vals = BTreeMap::new();
        for (k, v) in per {
            match v {
                Ok(x) => {
                    vals.insert(k.clone(), *x);
                }
                Err(e) if e.is_undefined() => match self.spec.nan_handling {
                    NanHandling::WorstValue => {
                        if let Some(w) = self.worst(metric) {
                            vals.insert(k.clone(), w);
                        }
                    }
                    NanHandling::Exclude => {}
                    NanHandling::RankThenAggregateWorstRank => {
                        return Err(Error::Incompatible("rank-then-aggregate compares algorithms, not classes".into()))
                    }
                },
                Err(e) => return Err(e.clone()),
            }
        }
        let weights = match self.class_mode {
            ClassAggregation::Macro => None,
            ClassAggregation::Weighted => Some(
                self.spec
                    .class_weights
                    .as_ref()
                    .ok_or_else(|| Error::invalid("weighted class aggregation needs class-weights in the aggregation spec"))?,
            ),
            ClassAggregation::PrevalenceWeighted => Some(&self.prevalence),
        };
        aggregation::aggregate_classes(&vals, self.class_mode, weights)
    }

    fn base_params(&self, entry: &PoolEntry, extra: &BTreeMap<String, Json>) -> BTreeMap<String, Json> {
        let mut p: BTreeMap<String, Json> = entry.params.clone();
        p.extend(extra.clone());
        p.insert("nan-handling".into(), serde_json::to_value(self.spec.nan_handling).unwrap());
        p.insert("hierarchy".into(), serde_json::to_value(&self.spec.hierarchy).unwrap());
        if let Some(b) = self.spec.bootstrap {
            p.insert("bootstrap-seed".into(), self.seed.into());
            p.insert("bootstrap-resamples".into(), b.resamples.into());
            p.insert("bootstrap-alpha".into(), b.alpha.into());
        }
        p
    }

    /// Report per-class values and, for several classes, the class-aggregated value.
    fn report(&mut self, label: &str, entry: &PoolEntry, stats: Vec<ClassStat<'_>>, extra: BTreeMap<String, Json>) -> Result<()> {
        let params = self.base_params(entry, &extra);
        let all = self.all();
        let mut points = BTreeMap::new();
        let mut total_cases = 0;
        let mut total_excluded = 0;
        for cs in &stats {
            let r = (cs.stat)(&all);
            if let Err(e) = &r {
                if !e.is_undefined() {
                    return Err(e.clone());
                }
            }
            let (n_cases, n_excluded) = cs.cases.unwrap_or((self.n_cases, 0));
            total_cases = total_cases.max(n_cases);
            total_excluded += n_excluded;
            let (value, ci) = match &r {
                Ok(v) => (Value::Num(*v), self.ci(label, &cs.stat, *v)),
                Err(e) => (Value::excluded(e.to_string()), None),
            };
            let mut p = params.clone();
            if !cs.class.is_empty() {
                p.insert("class".into(), cs.class.clone().into());
            }
            let rep = AggregateReport { metric: label.into(), value, ci, n_cases, n_excluded, params: p, warnings: vec![] };
            if stats.len() == 1 && !cs.class.is_empty() {
                let mut overall = rep.clone();
                overall.params.remove("class");
                self.results.push(rep);
                self.results.push(overall);
            } else {
                self.results.push(rep);
            }
            points.insert(cs.class.clone(), r);
        }
        if stats.len() < 2 {
            return Ok(());
        }
        let mut p = params;
        p.insert("class-aggregation".into(), serde_json::to_value(self.class_mode).unwrap());
        let (value, ci) = match self.combine(&entry.metric, &points) {
            Ok(v) => {
                let metric = entry.metric.clone();
                let this = &*self;
                let stat = |idx: &[usize]| -> Result<f64> {
                    let per: BTreeMap<String, Result<f64>> = stats.iter().map(|cs| (cs.class.clone(), (cs.stat)(idx))).collect();
                    this.combine(&metric, &per)
                };
                let (ci, note) = this.resample_ci(label, &stat, v);
                if let Some(n) = note {
                    self.warn(n);
                }
                (Value::Num(v), ci)
            }
            Err(e) if e.is_undefined() => (Value::excluded(e.to_string()), None),
            Err(e) => return Err(e),
        };
        self.results.push(AggregateReport { metric: label.into(), value, ci, n_cases: total_cases, n_excluded: total_excluded, params: p, warnings: vec![] });
        Ok(())
    }
}

// ---------------------------------------------------------------- entry point

/// Evaluate `data` with every metric of `pool`.
///
/// The aggregation spec wins over pool defaults where both set a value; the
/// pool's class aggregation applies when the aggregation spec leaves it open.
pub fn evaluate(data: &Dataset, pool: &MetricPool, spec: &AggregationSpec, seed: (u64, &str)) -> Result<Report> {
    if data.task != pool.category {
        return Err(Error::Incompatible(format!("dataset task {} differs from pool category {}", data.task, pool.category)));
    }
    if !pool.pending.is_empty() {
        let ids: Vec<&str> = pool.pending.iter().map(|g| g.id.as_str()).collect();
        return Err(Error::Incompatible(format!("pool has unresolved decision guides: {}", ids.join(", "))));
    }
    spec.validate()?;
    if spec.nan_handling == NanHandling::RankThenAggregateWorstRank {
        return Err(Error::Incompatible("rank-then-aggregate needs several algorithms; evaluate scores one".into()));
    }
    for e in pool.entries.iter().chain(pool.per_class.values().flatten()) {
        let m = catalog::metric(&e.metric).ok_or_else(|| Error::Schema(format!("unknown metric {}", e.metric)))?;
        if !m.applies_to(pool.category) {
            return Err(Error::Incompatible(format!("{} does not apply to {}", e.metric, pool.category)));
        }
    }
    let mut spec = spec.clone();
    let mut warnings = Vec::new();
    if spec.class_aggregation.is_none() {
        spec.class_aggregation = pool.aggregation.class_aggregation;
    }
    if spec.hierarchy.is_empty() && !pool.aggregation.hierarchy.is_empty() {
        warnings.push(format!(
            "pool recommends hierarchical aggregation by {:?}; the aggregation spec sets none",
            pool.aggregation.hierarchy
        ));
    }
    let paths: Vec<Vec<String>> = data.cases.iter().map(|c| data.group_path(c, &spec.hierarchy)).collect::<Result<_>>()?;
    let units: Vec<Vec<usize>> = if spec.hierarchy.is_empty() {
        (0..data.cases.len()).map(|i| vec![i]).collect()
    } else {
        let mut g: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, p) in paths.iter().enumerate() {
            g.entry(p[0].as_str()).or_default().push(i);
        }
        g.into_values().collect()
    };
    let mut engine = Engine {
        class_mode: spec.class_aggregation.unwrap_or(ClassAggregation::Macro),
        spec,
        seed: seed.0,
        units,
        n_cases: data.cases.len(),
        prevalence: BTreeMap::new(),
        results: Vec::new(),
        warnings,
    };
    let mut out = Outputs { per_case: Vec::new(), curves: BTreeMap::new() };
    match data.task {
        ProblemCategory::ImLC => eval_image(&mut engine, data, pool, &mut out)?,
        ProblemCategory::SemS => eval_segmentation(&mut engine, data, pool, &paths, &mut out)?,
        ProblemCategory::ObD | ProblemCategory::InS => eval_objects(&mut engine, data, pool, &paths, &mut out)?,
    }
    for w in &pool.warnings {
        engine.warn(format!("recommendation: {w}"));
    }
    Ok(Report {
        graph_version: GRAPH_VERSION.into(),
        category: data.task,
        classes: data.classes.clone(),
        n_cases: data.cases.len(),
        seed: seed.0,
        seed_source: seed.1.into(),
        aggregation: engine.spec,
        detection: pool.detection.clone(),
        results: engine.results,
        warnings: engine.warnings,
        curves: out.curves,
        per_case: out.per_case,
    })
}

struct Outputs {
    per_case: Vec<CaseRow>,
    curves: BTreeMap<String, String>,
}

fn whole<'a>(stat: Stat<'a>) -> Vec<ClassStat<'a>> {
    vec![ClassStat { class: String::new(), stat, cases: None }]
}

fn undefined_if_none(v: Option<f64>, what: &str) -> Result<f64> {
    v.ok_or_else(|| Error::undefined(format!("{what} undefined at the chosen operating point")))
}

/// Counting metric on binary counts.
fn counting_fn(e: &PoolEntry) -> Result<Box<dyn Fn(&BinaryCounts) -> Result<f64> + Send + Sync>> {
    Ok(match e.metric.as_str() {
        "Sensitivity" => Box::new(counting::sensitivity),
        "Specificity" => Box::new(counting::specificity),
        "PPV" => Box::new(counting::ppv),
        "NPV" => Box::new(counting::npv),
        "LR+" => Box::new(counting::lr_plus),
        "DSC" => Box::new(counting::dsc),
        "IoU" => Box::new(counting::iou),
        "F-beta" => {
            let beta = p_f64(e, "beta", 1.0)?;
            Box::new(move |c| counting::f_beta(c, beta))
        }
        "NB" => {
            let pt = p_f64(e, "risk-threshold", 0.1)?;
            Box::new(move |c| counting::net_benefit(c, pt))
        }
        m => return Err(Error::Incompatible(format!("{m} is not a counting metric"))),
    })
}

/// Calibration metric on a sample set; kernel estimators also return their tuning value.
fn calibration_value(e: &PoolEntry, s: &[ScoredSample], weights: Option<Vec<f64>>) -> Result<(f64, BTreeMap<String, Json>)> {
    let mut extra = BTreeMap::new();
    let v = match e.metric.as_str() {
        "BS" => {
            let normalized = p_bool(e, "normalized", true)?;
            extra.insert("normalized".into(), normalized.into());
            calibration::brier_score(s, normalized)?
        }
        "RBS" => calibration::root_brier_score(s)?,
        "NLL" => {
            extra.insert("epsilon".into(), calibration::NLL_EPSILON.into());
            calibration::nll(s, calibration::NLL_EPSILON)?
        }
        "ECE" => {
            let bins = p_f64(e, "bins", 10.0)? as usize;
            extra.insert("binning".into(), "equal-width".into());
            calibration::ece_binned(s, &BinningScheme::equal_width(bins)?)?
        }
        "CWCE" => {
            let bins = p_f64(e, "bins", 10.0)? as usize;
            let w = match weights {
                Some(w) => CwceWeighting::ImportanceWeights(w),
                None => CwceWeighting::Uniform,
            };
            let r = calibration::cwce(s, &BinningScheme::equal_width(bins)?, &w)?;
            extra.insert("weighting".into(), serde_json::to_value(&w).unwrap());
            extra.insert("per-class".into(), serde_json::to_value(&r.per_class).unwrap());
            r.value
        }
        "ECE-KDE" => {
            let p = p_f64(e, "p", 2.0)? as u32;
            let (v, h) = calibration::ece_kde(s, p, e.params.get("bandwidth").and_then(|b| b.as_f64()))?;
            extra.insert("p".into(), p.into());
            extra.insert("bandwidth".into(), h.into());
            v
        }
        "KCE" => {
            let (v, sigma) = calibration::kce(s, e.params.get("scale").and_then(|b| b.as_f64()))?;
            extra.insert("kernel-scale".into(), sigma.into());
            v
        }
        m => return Err(Error::Incompatible(format!("{m} is not a calibration metric"))),
    };
    Ok((v, extra))
}

fn is_kernel(metric: &str) -> bool {
    matches!(metric, "ECE-KDE" | "KCE")
}

/// Report a calibration metric; kernel estimators are not bootstrapped.
fn report_calibration(engine: &mut Engine, e: &PoolEntry, samples: &[ScoredSample], weights: Option<Vec<f64>>, out: &mut Outputs) -> Result<()> {
    let (_, extra) = calibration_value(e, samples, weights.clone())?;
    if e.metric == "ECE" {
        let bins = p_f64(e, "bins", 10.0)? as usize;
        let (_, rel) = calibration::reliability_diagram(samples, &BinningScheme::equal_width(bins)?)?;
        out.curves.insert("reliability".into(), calibration::reliability_csv(&rel));
    }
    let boot = engine.spec.bootstrap;
    if is_kernel(&e.metric) && boot.is_some() {
        engine.spec.bootstrap = None;
        engine.warn(format!("{}: no bootstrap interval for kernel estimators", e.metric));
    }
    // Kernel tuning values are fixed from the full data so resamples stay comparable.
    let mut fixed = e.clone();
    if let Some(h) = extra.get("bandwidth") {
        fixed.params.insert("bandwidth".into(), h.clone());
    }
    if let Some(s) = extra.get("kernel-scale") {
        fixed.params.insert("scale".into(), s.clone());
    }
    let stat: Stat = Box::new(move |idx: &[usize]| {
        let sub: Vec<ScoredSample> = idx.iter().map(|&i| samples[i].clone()).collect();
        calibration_value(&fixed, &sub, weights.clone()).map(|r| r.0)
    });
    let r = engine.report(&e.metric, e, whole(stat), extra);
    engine.spec.bootstrap = boot;
    r
}

fn class_weight_vector(engine: &Engine, classes: &[String]) -> Option<Vec<f64>> {
    if engine.class_mode != ClassAggregation::Weighted {
        return None;
    }
    let w = engine.spec.class_weights.as_ref()?;
    Some(classes.iter().map(|c| w.get(c).copied().unwrap_or(0.0)).collect())
}

// ---------------------------------------------------------------- image level

fn eval_image(engine: &mut Engine, data: &Dataset, pool: &MetricPool, out: &mut Outputs) -> Result<()> {
    let cases: Vec<ImageCase> = data.cases.iter().map(|c| parse_image_case(c, &data.classes)).collect::<Result<_>>()?;
    let c = data.classes.len();
    let with_scores = cases.iter().filter(|x| x.scores.is_some()).count();
    if with_scores != 0 && with_scores != cases.len() {
        return Err(Error::Schema("either every prediction carries scores or none does".into()));
    }
    let refs: Vec<usize> = cases.iter().map(|x| x.reference).collect();
    let labels: Vec<usize> = cases.iter().map(|x| x.label).collect();
    let samples: Option<Vec<ScoredSample>> = (with_scores > 0).then(|| {
        cases
            .iter()
            .zip(&data.cases)
            .map(|(x, d)| ScoredSample { case_id: d.id.clone(), ..ScoredSample::new(x.scores.clone().unwrap(), x.reference) })
            .collect()
    });
    let n = refs.len() as f64;
    engine.prevalence =
        data.classes.iter().enumerate().map(|(k, name)| (name.clone(), refs.iter().filter(|&&r| r == k).count() as f64 / n)).collect();
    let positives: Vec<usize> = if c == 2 { vec![1] } else { (0..c).collect() };
    let cm = |idx: &[usize]| {
        let r: Vec<usize> = idx.iter().map(|&i| refs[i]).collect();
        let l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        confusion_from_labels(&r, &l, c)
    };
    let sub = |idx: &[usize]| -> Vec<ScoredSample> {
        let s = samples.as_ref().expect("checked");
        idx.iter().map(|&i| s[i].clone()).collect()
    };
    let need_scores = |m: &str| -> Result<&Vec<ScoredSample>> {
        samples.as_ref().ok_or_else(|| Error::Incompatible(format!("{m} needs class scores; the dataset has labels only")))
    };
    for e in &pool.entries {
        let m = e.metric.as_str();
        match e.section {
            Section::MultiClass => {
                let stat: Stat = match m {
                    "Accuracy" => Box::new(move |idx: &[usize]| counting::accuracy(&cm(idx)?)),
                    "BA" => Box::new(move |idx: &[usize]| counting::balanced_accuracy(&cm(idx)?)),
                    "MCC" => Box::new(move |idx: &[usize]| counting::mcc(&cm(idx)?)),
                    "EC" => {
                        let normalized = p_bool(e, "normalized", false)?;
                        let kind = p_str(e, "costs", "zero-one")?.to_string();
                        let user = match kind.as_str() {
                            "user" => Some(data.cost_matrix.clone().ok_or_else(|| {
                                Error::Schema("Expected Cost with stated costs needs \"cost-matrix\" in the dataset".into())
                            })?),
                            "balanced" | "zero-one" => None,
                            k => return Err(Error::Schema(format!("EC: unknown cost scheme {k:?}"))),
                        };
                        Box::new(move |idx: &[usize]| {
                            let m = cm(idx)?;
                            let costs = match (&user, kind.as_str()) {
                                (Some(u), _) => u.clone(),
                                (None, "balanced") => CostMatrix::balanced(&counting::prevalences(&m)?)
                                    .map_err(|_| Error::undefined("balanced costs need every class present"))?,
                                _ => CostMatrix::zero_one(c),
                            };
                            counting::expected_cost(&m, &costs, normalized)
                        })
                    }
                    "WCK" => {
                        let w = match p_str(e, "weights", "quadratic")? {
                            "linear" => KappaWeights::linear(c),
                            "quadratic" => {
                                engine.warn("WCK: quadratic weights can give paradoxical results under skewed marginals");
                                KappaWeights::quadratic(c)
                            }
                            k => return Err(Error::Schema(format!("WCK: unknown weight scheme {k:?}"))),
                        };
                        Box::new(move |idx: &[usize]| counting::weighted_cohens_kappa(&cm(idx)?, &w))
                    }
                    _ => return Err(Error::Incompatible(format!("{m} is not a multi-class metric"))),
                };
                engine.report(m, e, whole(stat), BTreeMap::new())?;
            }
            Section::PerClass => {
                if let Some((target, value)) = p_target(e)? {
                    need_scores(m)?;
                    let metric = target_metric(m)?;
                    let label = format!("{m}@({target} = {value})");
                    let mut extra = BTreeMap::new();
                    let mut stats = Vec::new();
                    for &k in &positives {
                        let r = threshold::metric_at_target(&sub(&engine.all()), k, target, value, &[metric], false)?;
                        if let Some(w) = &r.warning {
                            engine.warn(format!("{label}, class {}: {w}", data.classes[k]));
                        }
                        extra.insert(format!("threshold[{}]", data.classes[k]), r.threshold.into());
                        let sub = &sub;
                        stats.push(ClassStat {
                            class: data.classes[k].clone(),
                            stat: Box::new(move |idx: &[usize]| {
                                let r = threshold::metric_at_target(&sub(idx), k, target, value, &[metric], false)?;
                                undefined_if_none(r.values.get(metric.as_str()).copied().flatten(), metric.as_str())
                            }),
                            cases: None,
                        });
                    }
                    engine.report(&label, e, stats, extra)?;
                    continue;
                }
                let f = std::sync::Arc::new(counting_fn(e)?);
                let use_scores = m == "NB" && samples.is_some();
                if use_scores {
                    let pt = p_f64(e, "risk-threshold", 0.1)?;
                    for &k in &positives {
                        let grid: Vec<f64> = (1..100).map(|t| t as f64 / 100.0).collect();
                        let curve = counting::net_benefit_curve(samples.as_ref().unwrap(), k, &grid)?;
                        let mut csv = String::from("threshold,net_benefit\n");
                        for (t, v) in curve {
                            csv.push_str(&format!("{t},{v}\n"));
                        }
                        out.curves.insert(format!("decision-curve-{}", data.classes[k]), csv);
                    }
                    let stats = positives
                        .iter()
                        .map(|&k| {
                            let f = f.clone();
                            let sub = &sub;
                            ClassStat {
                                class: data.classes[k].clone(),
                                stat: Box::new(move |idx: &[usize]| f(&counting::counts_at_threshold(&sub(idx), k, pt))),
                                cases: None,
                            }
                        })
                        .collect();
                    engine.report(m, e, stats, BTreeMap::new())?;
                } else {
                    let stats = positives
                        .iter()
                        .map(|&k| {
                            let f = f.clone();
                            let cm = &cm;
                            ClassStat {
                                class: data.classes[k].clone(),
                                stat: Box::new(move |idx: &[usize]| f(&cm(idx)?.one_vs_rest(k))),
                                cases: None,
                            }
                        })
                        .collect();
                    engine.report(m, e, stats, BTreeMap::new())?;
                }
            }
            Section::MultiThreshold => {
                let s = need_scores(m)?;
                for &k in &positives {
                    let name = &data.classes[k];
                    match m {
                        "AUROC" => out.curves.insert(format!("roc-{name}"), threshold::roc_curve(s, k)?.to_csv()),
                        "AP" => out.curves.insert(format!("pr-{name}"), threshold::pr_curve(s, k)?.to_csv()),
                        _ => return Err(Error::Incompatible(format!("{m} is not an image-level curve metric"))),
                    };
                }
                let stats = positives
                    .iter()
                    .map(|&k| {
                        let sub = &sub;
                        let auroc = m == "AUROC";
                        ClassStat {
                            class: data.classes[k].clone(),
                            stat: Box::new(move |idx: &[usize]| {
                                if auroc {
                                    threshold::auroc(&sub(idx), k)
                                } else {
                                    threshold::average_precision(&sub(idx), k)
                                }
                            }),
                            cases: None,
                        }
                    })
                    .collect();
                engine.report(m, e, stats, BTreeMap::new())?;
            }
            Section::Calibration => {
                let s = need_scores(m)?;
                let w = class_weight_vector(engine, &data.classes);
                report_calibration(engine, e, s, w, out)?;
            }
            Section::Overlap | Section::Boundary => {
                return Err(Error::Incompatible(format!("{m} needs segmentation data")));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- segmentation

/// Per-case value of an overlap or boundary metric for one class.
/// Returns the value and the case-specific worst value for unbounded metrics.
fn seg_value(e: &PoolEntry, r: &LabelMap, p: &LabelMap, class: u16) -> Result<(Value, Option<f64>)> {
    let keep = |x: Result<f64>| -> Result<Value> {
        match x {
            Ok(v) => Ok(Value::Num(v)),
            Err(Error::Undefined(w)) => Ok(Value::excluded(w)),
            Err(e) => Err(e),
        }
    };
    let mask_map = |m: &LabelMap| LabelMap::from_mask(m.shape().to_vec(), &m.mask_of(class), Some(m.spacing().to_vec()));
    let m = e.metric.as_str();
    Ok(match m {
        "DSC" | "IoU" | "F-beta" => {
            let f = counting_fn(e)?;
            let c = confusion_from_maps(r, p, class)?.binary(1)?;
            (keep(f(&c))?, None)
        }
        "clDice" => (keep(counting::cl_dice(&mask_map(r)?, &mask_map(p)?))?, None),
        "Boundary-IoU" => {
            let width = p_f64(e, "width", detection::DEFAULT_BOUNDARY_WIDTH)?;
            (keep(boundary::boundary_iou(&mask_map(r)?, &mask_map(p)?, width))?, None)
        }
        "HD" | "HD-percentile" | "MASD" | "ASSD" | "NSD" => {
            let a = boundary::extract_boundary(r, class);
            let b = boundary::extract_boundary(p, class);
            let v = match m {
                "HD" => boundary::hausdorff(&a, &b, None),
                "HD-percentile" => boundary::hausdorff(&a, &b, Some(p_f64(e, "percentile", 95.0)?)),
                "MASD" => boundary::masd(&a, &b, boundary::MASD_FACTOR),
                "ASSD" => boundary::assd(&a, &b),
                _ => boundary::nsd(&a, &b, p_f64(e, "tau", 1.0)?),
            };
            let worst = (m != "NSD").then(|| r.diagonal());
            (keep(v)?, worst)
        }
        _ => return Err(Error::Incompatible(format!("{m} is not a segmentation metric"))),
    })
}

fn is_boundary(metric: &str) -> bool {
    catalog::metric(metric).is_some_and(|m| m.family == catalog::Family::Boundary)
}

/// Per-case statistic: aggregate the case values of the selected cases.
fn per_case_stat<'a>(engine: &Engine, metric: &str, values: &'a [Vec<CaseValue>]) -> Result<(Stat<'a>, usize, usize)> {
    let mut spec = engine.spec.clone();
    spec.bootstrap = None;
    let worst = catalog::metric(metric).and_then(|m| m.worst_value());
    let seed = engine.seed;
    let all: Vec<CaseValue> = values.iter().flatten().cloned().collect();
    let rep = aggregation::aggregate(metric, &all, &spec, worst, seed)?;
    let metric = metric.to_string();
    let stat: Stat = Box::new(move |idx: &[usize]| {
        let cv: Vec<CaseValue> = idx.iter().flat_map(|&i| values[i].iter().cloned()).collect();
        let r = aggregation::aggregate(&metric, &cv, &spec, worst, seed)?;
        r.value.num().ok_or_else(|| Error::undefined("every case was excluded"))
    });
    Ok((stat, rep.n_cases, rep.n_excluded))
}

/// Distinct (metric, params) entries of the given sections and the classes using each.
fn class_entries(pool: &MetricPool, classes: &[String], sections: &[Section]) -> Vec<(PoolEntry, Vec<usize>)> {
    let mut out: Vec<(PoolEntry, Vec<usize>)> = Vec::new();
    for (k, name) in classes.iter().enumerate() {
        let list: Vec<&PoolEntry> = match pool.per_class.get(name) {
            Some(v) => v.iter().collect(),
            None => pool.entries.iter().collect(),
        };
        for e in list.into_iter().filter(|e| sections.contains(&e.section)) {
            match out.iter_mut().find(|(x, _)| x.metric == e.metric && x.params == e.params) {
                Some((_, ks)) => ks.push(k),
                None => out.push((e.clone(), vec![k])),
            }
        }
    }
    out
}

fn eval_segmentation(engine: &mut Engine, data: &Dataset, pool: &MetricPool, paths: &[Vec<String>], out: &mut Outputs) -> Result<()> {
    let c = data.classes.len();
    let maps: Vec<(LabelMap, LabelMap)> = data
        .cases
        .iter()
        .map(|cs| {
            let r = parse_map(&cs.reference, &format!("case {} reference", cs.id), c)?;
            let p = parse_map(&cs.prediction, &format!("case {} prediction", cs.id), c)?;
            if r.shape() != p.shape() {
                return Err(Error::Schema(format!("case {}: reference and prediction shapes differ", cs.id)));
            }
            Ok((r, p))
        })
        .collect::<Result<_>>()?;
    let mut pix = vec![0.0; c];
    for (r, _) in &maps {
        for &v in r.values() {
            if v > 0 {
                pix[v as usize - 1] += 1.0;
            }
        }
    }
    let total: f64 = pix.iter().sum::<f64>().max(1.0);
    engine.prevalence = data.classes.iter().zip(&pix).map(|(n, p)| (n.clone(), p / total)).collect();
    for e in &pool.entries {
        if !matches!(e.section, Section::Overlap | Section::Boundary) {
            return Err(Error::Incompatible(format!("{} is not a segmentation metric", e.metric)));
        }
    }
    for (e, ks) in class_entries(pool, &data.classes, &[Section::Overlap, Section::Boundary]) {
        if ks.len() < c {
            engine.warn(format!("{}: computed for {} of {c} classes (class-specific recommendations)", e.metric, ks.len()));
        }
        let boundary_metric = is_boundary(&e.metric);
        let mut per_class_values: Vec<(usize, Vec<Vec<CaseValue>>)> = Vec::new();
        for &k in &ks {
            let class = (k + 1) as u16;
            let rows: Vec<Result<Option<(Value, Option<f64>)>>> = maps
                .par_iter()
                .map(|(r, p)| {
                    if boundary_metric && boundary::connected_components(r.shape(), &r.mask_of(class)) > 1 {
                        return Ok(None);
                    }
                    seg_value(&e, r, p, class).map(Some)
                })
                .collect();
            let mut values = Vec::with_capacity(maps.len());
            let mut skipped = 0;
            for (i, row) in rows.into_iter().enumerate() {
                match row? {
                    None => {
                        skipped += 1;
                        values.push(vec![]);
                    }
                    Some((v, worst)) => {
                        out.per_case.push(CaseRow { case: data.cases[i].id.clone(), class: data.classes[k].clone(), metric: e.metric.clone(), value: v.clone() });
                        values.push(vec![CaseValue { value: v, groups: paths[i].clone(), worst }]);
                    }
                }
            }
            if skipped > 0 {
                engine.warn(format!(
                    "{} for class {}: {skipped} case(s) skipped, several disconnected reference structures make boundary distances ambiguous",
                    e.metric, data.classes[k]
                ));
            }
            per_class_values.push((k, values));
        }
        let mut stats = Vec::new();
        for (k, values) in &per_class_values {
            let (stat, n, x) = per_case_stat(engine, &e.metric, values)?;
            stats.push(ClassStat { class: data.classes[*k].clone(), stat, cases: Some((n, x)) });
        }
        let mut extra = BTreeMap::new();
        if e.metric == "MASD" {
            extra.insert("factor".into(), boundary::MASD_FACTOR.into());
        }
        if is_boundary(&e.metric) {
            extra.insert("units".into(), "spacing".into());
        }
        engine.report(&e.metric.clone(), &e, stats, extra)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- object level

#[derive(Clone, Debug, Default)]
struct ObjImage {
    counts: BinaryCounts,
    detections: Option<ImageDetections>,
    score_sum: f64,
}

fn eval_objects(engine: &mut Engine, data: &Dataset, pool: &MetricPool, paths: &[Vec<String>], out: &mut Outputs) -> Result<()> {
    let c = data.classes.len();
    let det = pool.detection.clone().ok_or_else(|| Error::Incompatible("pool has no detection configuration".into()))?;
    let kind = det.criterion.ok_or_else(|| Error::Incompatible("localization criterion not chosen".into()))?;
    let strategy_kind = det.strategy.ok_or_else(|| Error::Incompatible("assignment strategy not chosen".into()))?;
    let cases: Vec<(Vec<Instance>, Vec<Instance>)> = data
        .cases
        .iter()
        .map(|cs| {
            Ok((
                parse_instances(&cs.reference, &format!("case {} reference", cs.id), c)?,
                parse_instances(&cs.prediction, &format!("case {} prediction", cs.id), c)?,
            ))
        })
        .collect::<Result<_>>()?;
    let has_scores = cases.iter().all(|(_, p)| p.iter().all(|i| i.score.is_some()));
    let thresholds: Vec<Option<f64>> = if kind.needs_threshold() {
        let t = if det.thresholds.is_empty() { detection::threshold_grid() } else { det.thresholds.clone() };
        t.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    if thresholds.len() > 1 {
        engine.warn(format!("detection metrics averaged over {} localization thresholds", thresholds.len()));
    }
    let strategy = AssignmentStrategy { kind: strategy_kind, punish_double_assignments: det.punish_double_assignments, allow_merges: det.allow_merges };
    let mut ref_counts = vec![0.0; c];
    for (r, _) in &cases {
        for i in r {
            ref_counts[i.class as usize - 1] += 1.0;
        }
    }
    let total: f64 = ref_counts.iter().sum::<f64>().max(1.0);
    engine.prevalence = data.classes.iter().zip(&ref_counts).map(|(n, x)| (n.clone(), x / total)).collect();

    // matches[t][case] = per-class matching
    let mut matches: Vec<Vec<BTreeMap<u32, MatchResult>>> = Vec::new();
    for &t in &thresholds {
        let crit = LocalizationCriterion { kind, threshold: t, boundary_width: None, spacing: None };
        crit.validate()?;
        let m: Vec<BTreeMap<u32, MatchResult>> =
            cases.par_iter().map(|(r, p)| detection::assign_per_class(p, r, &crit, &strategy)).collect::<Result<_>>()?;
        for w in m.iter().flat_map(|x| x.values()).flat_map(|x| x.warnings.iter()) {
            engine.warn(format!("matching: {w}"));
        }
        matches.push(m);
    }
    // obj[t][class][case]
    let obj: Vec<Vec<Vec<ObjImage>>> = matches
        .iter()
        .map(|per_case| {
            (1..=c as u32)
                .map(|k| {
                    per_case
                        .iter()
                        .zip(&cases)
                        .map(|(mm, (r, p))| {
                            let n_ref = r.iter().filter(|i| i.class == k).count();
                            let empty = MatchResult { unmatched_references: vec![], ..Default::default() };
                            let m = mm.get(&k).unwrap_or(&empty);
                            let detections = if has_scores { Some(detection::image_detections(p, n_ref, m)?) } else { None };
                            Ok(ObjImage { counts: m.counts(), detections, score_sum: m.total_score() })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mode = pool.aggregation.detection_aggregation.unwrap_or(ApAggregation::PerDataset);
    let classes: Vec<usize> = (0..c).collect();
    let obj = &obj;
    let avg = move |k: usize, idx: &[usize], f: &dyn Fn(&[&ObjImage]) -> Result<f64>| -> Result<f64> {
        let mut s = 0.0;
        for per_t in obj {
            let imgs: Vec<&ObjImage> = idx.iter().map(|&i| &per_t[k][i]).collect();
            s += f(&imgs)?;
        }
        Ok(s / obj.len() as f64)
    };
    let images_of = |imgs: &[&ObjImage]| -> Vec<ImageDetections> { imgs.iter().map(|o| o.detections.clone().unwrap_or_default()).collect() };
    let mut base_extra = BTreeMap::new();
    base_extra.insert("criterion".into(), kind.as_str().into());
    base_extra.insert("thresholds".into(), serde_json::to_value(thresholds.iter().flatten().collect::<Vec<_>>()).unwrap());
    base_extra.insert("strategy".into(), strategy_kind.as_str().into());
    base_extra.insert("punish-double-assignments".into(), det.punish_double_assignments.into());
    base_extra.insert("detection-aggregation".into(), serde_json::to_value(mode).unwrap());
    let need_scores = |m: &str| -> Result<()> {
        if has_scores {
            Ok(())
        } else {
            Err(Error::Incompatible(format!("{m} needs a score on every prediction")))
        }
    };

    for e in &pool.entries {
        let m = e.metric.as_str();
        match e.section {
            Section::PerClass => {
                if let Some((target, value)) = p_target(e)? {
                    need_scores(m)?;
                    let metric = target_metric(m)?;
                    let label = format!("{m}@({target} = {value})");
                    let stats = classes
                        .iter()
                        .map(|&k| ClassStat {
                            class: data.classes[k].clone(),
                            stat: Box::new(move |idx: &[usize]| {
                                avg(k, idx, &|imgs| {
                                    let r = threshold::detection_metric_at_target(&images_of(imgs), target, value, &[metric], false)?;
                                    undefined_if_none(r.values.get(metric.as_str()).copied().flatten(), metric.as_str())
                                })
                            }),
                            cases: None,
                        })
                        .collect();
                    engine.report(&label, e, stats, base_extra.clone())?;
                    continue;
                }
                let stats: Vec<ClassStat> = match m {
                    "PQ" => {
                        if !matches!(kind, CriterionKind::MaskIou | CriterionKind::BoxIou | CriterionKind::ApproxIou) {
                            engine.warn("PQ: segmentation quality assumes IoU match scores; the chosen criterion scores differently");
                        }
                        classes
                            .iter()
                            .map(|&k| ClassStat {
                                class: data.classes[k].clone(),
                                stat: Box::new(move |idx: &[usize]| {
                                    avg(k, idx, &|imgs| {
                                        let counts = detection::pooled_counts(&imgs.iter().map(|o| o.counts).collect::<Vec<_>>());
                                        let sum: f64 = imgs.iter().map(|o| o.score_sum).sum();
                                        let dq = detection::nan_policy(&counts).f1.unwrap_or(0.0);
                                        Ok(if counts.tp == 0 {
                                            if counts.fp == 0 && counts.fn_ == 0 { 1.0 } else { 0.0 }
                                        } else {
                                            sum / counts.tp as f64 * dq
                                        })
                                    })
                                }),
                                cases: None,
                            })
                            .collect()
                    }
                    "FPPI" => classes
                        .iter()
                        .map(|&k| ClassStat {
                            class: data.classes[k].clone(),
                            stat: Box::new(move |idx: &[usize]| {
                                avg(k, idx, &|imgs| counting::fppi(imgs.iter().map(|o| o.counts.fp).sum(), imgs.len()))
                            }),
                            cases: None,
                        })
                        .collect(),
                    _ => {
                        let f = std::sync::Arc::new(counting_fn(e)?);
                        let beta = p_f64(e, "beta", 1.0)?;
                        let metric = m.to_string();
                        classes
                            .iter()
                            .map(|&k| {
                                let f = f.clone();
                                let metric = metric.clone();
                                ClassStat {
                                    class: data.classes[k].clone(),
                                    stat: Box::new(move |idx: &[usize]| {
                                        avg(k, idx, &|imgs| {
                                            let counts: Vec<BinaryCounts> = imgs.iter().map(|o| o.counts).collect();
                                            match mode {
                                                ApAggregation::PerDataset => f(&detection::pooled_counts(&counts)),
                                                ApAggregation::PerImage => match metric.as_str() {
                                                    "Sensitivity" => detection::per_image_mean(&counts, |p| p.sensitivity),
                                                    "PPV" => detection::per_image_mean(&counts, |p| p.ppv),
                                                    "F-beta" if beta == 1.0 => detection::per_image_mean(&counts, |p| p.f1),
                                                    _ => {
                                                        let v: Vec<f64> = counts.iter().filter_map(|c| f(c).ok()).collect();
                                                        if v.is_empty() {
                                                            Err(Error::undefined("every image was excluded"))
                                                        } else {
                                                            Ok(v.iter().sum::<f64>() / v.len() as f64)
                                                        }
                                                    }
                                                },
                                            }
                                        })
                                    }),
                                    cases: None,
                                }
                            })
                            .collect()
                    }
                };
                engine.report(m, e, stats, base_extra.clone())?;
            }
            Section::MultiThreshold => {
                need_scores(m)?;
                let grid: Vec<f64> = match e.params.get("fppi") {
                    Some(v) => serde_json::from_value(v.clone()).map_err(|_| Error::Schema("FROC: fppi must be a list of numbers".into()))?,
                    None => counting::FPPI_GRID.to_vec(),
                };
                let froc = match m {
                    "FROC" => true,
                    "AP" => false,
                    _ => return Err(Error::Incompatible(format!("{m} is not an object-level curve metric"))),
                };
                if froc {
                    for &k in &classes {
                        let imgs: Vec<ImageDetections> = obj[0][k].iter().map(|o| o.detections.clone().unwrap_or_default()).collect();
                        if let Ok(curve) = threshold::froc_curve(&imgs) {
                            out.curves.insert(format!("froc-{}", data.classes[k]), curve.to_csv());
                        }
                    }
                }
                let stats = classes
                    .iter()
                    .map(|&k| {
                        let grid = grid.clone();
                        ClassStat {
                            class: data.classes[k].clone(),
                            stat: Box::new(move |idx: &[usize]| {
                                avg(k, idx, &|imgs| {
                                    let im = images_of(imgs);
                                    if froc {
                                        threshold::froc_score(&im, &grid)
                                    } else {
                                        threshold::detection_ap(&im, mode)
                                    }
                                })
                            }),
                            cases: None,
                        }
                    })
                    .collect();
                engine.report(m, e, stats, base_extra.clone())?;
            }
            Section::Calibration => {
                need_scores(m)?;
                // Each detection is a binary prediction: did it match a reference?
                let samples: Vec<ScoredSample> = obj[0]
                    .iter()
                    .flat_map(|per_case| per_case.iter().flat_map(|o| o.detections.iter().flat_map(|d| d.detections.iter())))
                    .map(|&(s, tp)| ScoredSample::new(vec![1.0 - s, s], tp as usize))
                    .collect();
                if samples.is_empty() {
                    return Err(Error::Incompatible(format!("{m}: no predictions to calibrate")));
                }
                engine.warn(format!("{m}: computed over all detections pooled; intervals resample detections, not images"));
                let saved = std::mem::replace(&mut engine.units, (0..samples.len()).map(|i| vec![i]).collect());
                let saved_n = std::mem::replace(&mut engine.n_cases, samples.len());
                let r = report_calibration(engine, e, &samples, None, out);
                engine.units = saved;
                engine.n_cases = saved_n;
                r?;
            }
            Section::Overlap | Section::Boundary => {
                eval_instance_segmentation(engine, data, e, &cases, &matches[0], paths, out)?;
            }
            Section::MultiClass => return Err(Error::Incompatible(format!("{m} is not an object-level metric"))),
        }
    }

    if det.stratify_by_size {
        let beta = pool.entries.iter().find(|e| e.metric == "F-beta").map(|e| p_f64(e, "beta", 1.0)).transpose()?.unwrap_or(1.0);
        let mut sizes: Vec<f64> = cases.iter().flat_map(|(r, _)| r.iter().map(|i| i.size())).collect();
        sizes.sort_by(f64::total_cmp);
        if sizes.len() >= 3 {
            let edges = vec![quantile(&sizes, 1.0 / 3.0), quantile(&sizes, 2.0 / 3.0)];
            let bins = edges.len() + 1;
            let strat: Vec<Vec<BinaryCounts>> = matches[0]
                .iter()
                .zip(&cases)
                .map(|(mm, (r, p))| {
                    let mut acc = vec![BinaryCounts::default(); bins];
                    for m in mm.values() {
                        for (b, part) in detection::size_stratify(p, r, m, &edges).iter().enumerate() {
                            acc[b] = acc[b] + part.counts();
                        }
                    }
                    acc
                })
                .collect();
            let entry = PoolEntry { section: Section::PerClass, metric: "F-beta".into(), params: [("beta".to_string(), Json::from(beta))].into(), optional: false, source: "size stratification".into() };
            for b in 0..bins {
                let lo = if b == 0 { 0.0 } else { edges[b - 1] };
                let hi = edges.get(b).copied().unwrap_or(f64::INFINITY);
                let strat = &strat;
                let stat: Stat = Box::new(move |idx: &[usize]| {
                    let c = idx.iter().fold(BinaryCounts::default(), |a, &i| a + strat[i][b]);
                    counting::f_beta(&c, beta)
                });
                let mut extra = base_extra.clone();
                extra.insert("size-bin".into(), format!("[{lo}, {hi})").into());
                engine.report(&format!("F-beta[size {}/{bins}]", b + 1), &entry, whole(stat), extra)?;
            }
        } else {
            engine.warn("size stratification skipped: fewer than three reference objects");
        }
    }
    Ok(())
}

/// Overlap/boundary quality of matched instance pairs (first localization threshold).
fn eval_instance_segmentation(
    engine: &mut Engine,
    data: &Dataset,
    e: &PoolEntry,
    cases: &[(Vec<Instance>, Vec<Instance>)],
    matches: &[BTreeMap<u32, MatchResult>],
    paths: &[Vec<String>],
    out: &mut Outputs,
) -> Result<()> {
    let c = data.classes.len();
    let mask = |i: &Instance| -> Result<LabelMap> {
        match &i.location {
            Location::Mask(m) => Ok(m.clone()),
            _ => Err(Error::Incompatible(format!("{} on instances needs mask locations", e.metric))),
        }
    };
    let mut per_class: Vec<Vec<Vec<CaseValue>>> = vec![vec![Vec::new(); cases.len()]; c];
    let rows: Vec<Result<Vec<(usize, String, Value, Option<f64>)>>> = cases
        .par_iter()
        .zip(matches)
        .map(|((r, p), mm)| {
            let mut v = Vec::new();
            for (k, m) in mm {
                for pair in &m.pairs {
                    let rm = mask(&r[pair.reference])?;
                    let pm = mask(&p[pair.prediction])?;
                    let (val, worst) = seg_value(e, &rm, &pm, 1)?;
                    v.push((*k as usize - 1, format!("ref#{}", pair.reference), val, worst));
                }
            }
            Ok(v)
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (k, inst, val, worst) in row? {
            out.per_case.push(CaseRow { case: format!("{}/{inst}", data.cases[i].id), class: data.classes[k].clone(), metric: e.metric.clone(), value: val.clone() });
            per_class[k][i].push(CaseValue { value: val, groups: paths[i].clone(), worst });
        }
    }
    let mut stats = Vec::new();
    for (k, values) in per_class.iter().enumerate() {
        if values.iter().all(|v| v.is_empty()) {
            continue;
        }
        let (stat, n, x) = per_case_stat(engine, &e.metric, values)?;
        stats.push(ClassStat { class: data.classes[k].clone(), stat, cases: Some((n, x)) });
    }
    if stats.is_empty() {
        engine.warn(format!("{}: no matched instances", e.metric));
        return Ok(());
    }
    let mut extra = BTreeMap::new();
    extra.insert("scope".into(), "matched instance pairs".into());
    engine.report(&e.metric, e, stats, extra)
}
