use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ProblemCategory;
use crate::error::{Error, Result};

/// Allowed values of a fingerprint item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    Bool,
    Choice { options: &'static [&'static str] },
    Count { min: u32 },
}

/// Static description of one fingerprint item.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ItemSpec {
    pub key: &'static str,
    pub name: &'static str,
    pub domain: Domain,
    pub prompt: &'static str,
    pub why: &'static str,
}

const CATEGORIES: &[&str] = &["ImLC", "SemS", "ObD", "InS"];
const GRANULARITY: &[&str] = &["overall-position", "rough-outline"];
const OUTLIERS: &[&str] = &["existence", "distance-contour-focus", "distance-outlier-focus"];
const RULES: &[&str] = &["target-value", "optimization", "argmax", "cost-benefit", "none"];
const USE_CASES: &[&str] = &["U1", "U2", "U3", "none"];
const INTERPRET: &[&str] = &["calibration-only", "joint-with-discrimination", "none"];
const REF_GRANULARITY: &[&str] = &["exact-outline", "rough-outline", "center-point"];

const fn b(key: &'static str, name: &'static str, prompt: &'static str, why: &'static str) -> ItemSpec {
    ItemSpec { key, name, domain: Domain::Bool, prompt, why }
}

const fn ch(
    key: &'static str,
    name: &'static str,
    options: &'static [&'static str],
    prompt: &'static str,
    why: &'static str,
) -> ItemSpec {
    ItemSpec { key, name, domain: Domain::Choice { options }, prompt, why }
}

/// Every item the decision graph can ask about.
pub static ITEMS: &[ItemSpec] = &[
    ch("FP1.1", "problem-category", CATEGORIES,
       "Which problem category does the task belong to?",
       "The category fixes which subprocesses apply and which metrics are mathematically valid."),
    b("S1.1", "whole-image-label",
      "Is the label assigned to the image as a whole rather than to pixels or objects?",
      "Image-level labels lead to classification; spatial labels lead to segmentation or detection."),
    b("S1.2", "distinguish-instances",
      "Do individual objects of the same class need to be told apart (counted, matched one by one)?",
      "Tasks that require instance distinction should be validated at object level, not as plain pixel labelling."),
    b("FP2.1", "boundary-importance",
      "Is the exact boundary of the structures of particular importance?",
      "Boundary interest calls for boundary-based metrics or outline-aware object categories."),
    b("FP2.2", "volume-importance",
      "Is the volume of the structures of particular importance?",
      "Volume interest suggests complementing overlap metrics with application-specific volume errors."),
    b("FP2.3", "center-importance",
      "Is the center or centerline of the structures of particular importance?",
      "Centerline interest favours skeleton-based overlap and center-based localization."),
    ch("FP2.4", "localization-granularity", GRANULARITY,
       "Is only the position of objects needed, or also a rough outline?",
       "Position-only interest admits point and distance criteria; outline interest needs overlap criteria."),
    b("FP2.5.1", "unequal-class-interest",
      "Are some classes of more interest than others?",
      "Unequal interest changes class aggregation and the choice of calibration estimator."),
    b("FP2.5.2", "unequal-confusion-severity",
      "Are some confusions between classes more severe than others (or is FP vs FN preferred)?",
      "Unequal severity requires cost-aware metrics or a weighted F-score."),
    b("FP2.5.3", "prevalence-vs-importance-mismatch",
      "Do the class prevalences differ from how important the classes are?",
      "A mismatch biases prevalence-driven metrics toward classes that matter less."),
    b("FP2.5.4", "confusion-costs-available",
      "Are costs for the individual class confusions available?",
      "Cost-sensitive metrics need an explicit cost matrix."),
    b("FP2.5.5", "compensate-imbalance",
      "Should class imbalance be compensated for?",
      "Compensation favours prevalence-independent metrics and macro averaging."),
    ch("FP2.5.6", "outlier-penalization", OUTLIERS,
       "Should boundary errors be penalized by their existence or by their distance (contour or outlier focus)?",
       "This preference separates tolerance-based from distance-based boundary metrics."),
    b("FP2.5.7", "compensate-annotation-imprecision",
      "Should small annotation imprecisions be tolerated?",
      "Tolerance for imprecision points to a surface metric with an explicit tolerance."),
    b("FP2.5.8", "punish-double-assignments",
      "Should several predictions matching one reference be punished?",
      "Decides whether surplus matches count as false positives."),
    ch("FP2.6", "decision-rule", RULES,
       "Which decision rule turns predicted scores into decisions?",
       "The decision rule determines which per-class counting metrics are meaningful."),
    b("FP2.7.1", "calibration-requested",
      "Should the calibration of predicted scores be assessed?",
      "Calibration metrics are only added on request."),
    ch("FP2.7.2", "calibration-comparison-use-case", USE_CASES,
       "Which comparative calibration assessment is intended (U1 re-calibration methods, U2 classifiers, U3 overall performance)?",
       "Each comparison scenario favours a different estimator."),
    ch("FP2.7.3", "output-interpretability", INTERPRET,
       "Should the reliability of scores be assessed on its own or jointly with discrimination?",
       "Decides between calibration-error estimates and proper scoring rules."),
    b("FP3.1", "small-relative-size",
      "Are the target structures small relative to the pixel size?",
      "Small structures make overlap metrics unstable and call for lower localization thresholds."),
    b("FP3.2", "high-size-variability",
      "Do structure sizes vary strongly?",
      "Size variability calls for size stratification and lower localization thresholds."),
    b("FP3.3", "tubular",
      "Are the target structures tubular?",
      "Tubular structures are better assessed with skeleton-aware overlap."),
    b("FP3.4", "hierarchical-labels",
      "Do the labels have a hierarchical structure?",
      "Hierarchies may need application-specific metrics and correlated aggregation."),
    b("FP3.5", "touching-or-overlapping",
      "Can target structures touch or overlap?",
      "Dense structures call for instance-level validation and higher localization thresholds."),
    b("FP3.6", "disconnected-possible",
      "Can one target structure consist of disconnected parts?",
      "Disconnected parts confuse distance-based metrics and some localization criteria."),
    b("FP4.1", "high-imbalance",
      "Is there a high class imbalance?",
      "Imbalance makes prevalence-dependent metrics misleading."),
    b("FP4.2", "prevalences-reflect-population",
      "Do the class prevalences of the data reflect the target population?",
      "Only then are prevalence-dependent metrics interpretable."),
    b("FP4.3.1", "noisy-reference",
      "Is the reference noisy (high inter-rater variability)?",
      "Noisy references need tolerant metrics."),
    b("FP4.3.2", "spatial-outliers-possible",
      "Can the reference contain spatial outliers?",
      "Outliers make maximum-distance metrics unreliable."),
    ch("FP4.4", "reference-granularity", REF_GRANULARITY,
       "How precisely are references annotated (exact outline, rough outline, center point)?",
       "The reference representation limits which localization criteria are computable."),
    b("FP4.5", "non-independent-cases",
      "Are test cases non-independent (several images per patient, several objects per image)?",
      "Non-independence requires hierarchical aggregation."),
    b("FP4.6", "empty-reference-possible",
      "Can a reference contain no target structure?",
      "Empty references produce undefined values that need an aggregation rule."),
    b("FP5.1", "class-scores-available",
      "Does the algorithm output continuous class scores?",
      "Scores enable multi-threshold and calibration metrics and score-based matching."),
    b("FP5.2", "empty-prediction-possible",
      "Can the algorithm output contain no target structure?",
      "Empty predictions produce undefined values that need an aggregation rule."),
    b("FP5.3", "invalid-prediction-possible",
      "Can the algorithm fail to produce a valid output?",
      "Invalid outputs must enter aggregation with the worst value."),
    b("FP5.4", "overlapping-predictions-possible",
      "Can predicted objects overlap each other?",
      "Overlapping predictions rule out matching by overlap > 0.5."),
    ItemSpec {
        key: "class-count",
        name: "class-count",
        domain: Domain::Count { min: 1 },
        prompt: "How many classes are there (all classes for image-level tasks, foreground classes otherwise)?",
        why: "Some recommendations only apply to binary or only to multi-class problems.",
    },
];

pub fn item_spec(key: &str) -> Option<&'static ItemSpec> {
    ITEMS.iter().find(|i| i.key == key)
}

/// A single answer: boolean, count, or one option of a choice.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Flag(bool),
    Count(u32),
    Choice(String),
}

impl Answer {
    pub fn check(&self, spec: &ItemSpec) -> Result<()> {
        let ok = match (spec.domain, self) {
            (Domain::Bool, Answer::Flag(_)) => true,
            (Domain::Choice { options }, Answer::Choice(s)) => options.contains(&s.as_str()),
            (Domain::Count { min }, Answer::Count(n)) => *n >= min,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!("{}: value {self} not in domain {:?}", spec.key, spec.domain)))
        }
    }
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Flag(b) => write!(f, "{b}"),
            Answer::Count(n) => write!(f, "{n}"),
            Answer::Choice(s) => write!(f, "{s:?}"),
        }
    }
}

/// Typed record of answered fingerprint items.
///
/// Serialized as a flat object keyed by item key (`"FP2.5.2": true`), plus an
/// optional `"per-class"` object holding FP3.* overrides per class label.
/// Unset items are simply absent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Fingerprint {
    items: BTreeMap<String, Answer>,
    per_class: BTreeMap<String, BTreeMap<String, Answer>>,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn for_category(category: ProblemCategory) -> Self {
        let mut f = Self::new();
        f.items.insert("FP1.1".into(), Answer::Choice(category.as_str().into()));
        f
    }

    /// Set an item after validating it against the catalog.
    pub fn set(&mut self, key: &str, value: Answer) -> Result<()> {
        let spec = item_spec(key).ok_or_else(|| Error::Schema(format!("unknown fingerprint item {key:?}")))?;
        value.check(spec)?;
        self.items.insert(key.to_string(), value);
        self.check_class_count()
    }

    pub fn with(mut self, key: &str, value: impl Into<Answer>) -> Result<Self> {
        self.set(key, value.into())?;
        Ok(self)
    }

    pub fn unset(&mut self, key: &str) {
        self.items.remove(key);
    }

    pub fn get(&self, key: &str) -> Option<&Answer> {
        self.items.get(key)
    }

    pub fn items(&self) -> &BTreeMap<String, Answer> {
        &self.items
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        match self.items.get(key) {
            Some(Answer::Flag(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn choice(&self, key: &str) -> Option<&str> {
        match self.items.get(key) {
            Some(Answer::Choice(s)) => Some(s),
            _ => None,
        }
    }

    pub fn category(&self) -> Option<ProblemCategory> {
        self.choice("FP1.1").and_then(|s| s.parse().ok())
    }

    pub fn class_count(&self) -> Option<u32> {
        match self.items.get("class-count") {
            Some(Answer::Count(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn per_class(&self) -> &BTreeMap<String, BTreeMap<String, Answer>> {
        &self.per_class
    }

    /// Override an FP3.* item for one class.
    pub fn set_class_override(&mut self, class: &str, key: &str, value: Answer) -> Result<()> {
        if !key.starts_with("FP3.") {
            return Err(Error::Schema(format!("per-class overrides are limited to FP3.* items, got {key}")));
        }
        let spec = item_spec(key).ok_or_else(|| Error::Schema(format!("unknown fingerprint item {key:?}")))?;
        value.check(spec)?;
        self.per_class.entry(class.to_string()).or_default().insert(key.to_string(), value);
        Ok(())
    }

    /// The fingerprint as seen by one class: global items with its overrides applied.
    pub fn view_for_class(&self, class: &str) -> Fingerprint {
        let mut f = Fingerprint { items: self.items.clone(), per_class: BTreeMap::new() };
        if let Some(o) = self.per_class.get(class) {
            f.items.extend(o.clone());
        }
        f
    }

    fn check_class_count(&self) -> Result<()> {
        if let (Some(cat), Some(n)) = (self.category(), self.class_count()) {
            if n < cat.min_classes() {
                return Err(Error::Schema(format!("class-count {n} below {} for {cat}", cat.min_classes())));
            }
        }
        Ok(())
    }

    pub fn from_json(v: serde_json::Value) -> Result<Self> {
        let obj = match v {
            serde_json::Value::Object(o) => o,
            _ => return Err(Error::Schema("fingerprint must be a JSON object".into())),
        };
        let mut f = Fingerprint::new();
        for (k, v) in obj {
            if k == "per-class" {
                let classes: BTreeMap<String, BTreeMap<String, Answer>> =
                    serde_json::from_value(v).map_err(|e| Error::Schema(format!("per-class: {e}")))?;
                for (class, items) in classes {
                    for (key, ans) in items {
                        f.set_class_override(&class, &key, ans)?;
                    }
                }
                continue;
            }
            if v.is_null() {
                continue;
            }
            let ans: Answer = serde_json::from_value(v).map_err(|e| Error::Schema(format!("{k}: {e}")))?;
            f.set(&k, ans)?;
        }
        Ok(f)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (k, v) in &self.items {
            m.insert(k.clone(), serde_json::to_value(v).expect("answers serialize"));
        }
        if !self.per_class.is_empty() {
            m.insert("per-class".into(), serde_json::to_value(&self.per_class).expect("answers serialize"));
        }
        serde_json::Value::Object(m)
    }
}

impl From<bool> for Answer {
    fn from(b: bool) -> Self {
        Answer::Flag(b)
    }
}

impl From<u32> for Answer {
    fn from(n: u32) -> Self {
        Answer::Count(n)
    }
}

impl From<&str> for Answer {
    fn from(s: &str) -> Self {
        Answer::Choice(s.to_string())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Fingerprint::from_json(v).map_err(serde::de::Error::custom)
    }
}
