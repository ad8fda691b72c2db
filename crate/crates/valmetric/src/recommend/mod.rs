//! Decision graph from problem fingerprint to metric pool.
//!
//! The graph is data: question nodes branch on fingerprint items, action
//! nodes mutate the pool under construction, guide nodes present a decision
//! guide the user must resolve, and call nodes enter a subprocess (S1..S9)
//! and return to their `next` node. Traversal is deterministic, so a
//! fingerprint plus a set of guide choices always yields the same pool.

mod graph;
mod session;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::aggregation::{ClassAggregation, NanHandling};
use crate::catalog;
use crate::detection::{CriterionKind, StrategyKind};
use crate::error::{Error, Result};
use crate::model::{item_spec, Answer, Domain, Fingerprint, ProblemCategory};
use crate::threshold::ApAggregation;

pub use session::{QuestionDescriptor, Session, TranscriptEntry};

pub const GRAPH_VERSION: &str = "1.0.0";
/// Localization threshold picked when every vote points lower.
pub const LOW_THRESHOLD: f64 = 0.1;
/// Localization threshold picked when every vote points higher.
pub const HIGH_THRESHOLD: f64 = 0.75;
/// Placeholder center-distance threshold (spacing units).
pub const DEFAULT_CENTER_DISTANCE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Section {
    MultiClass,
    PerClass,
    MultiThreshold,
    Calibration,
    Overlap,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vote {
    Lower,
    Higher,
}

/// Arm condition over one item's answer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "match", rename_all = "kebab-case")]
pub enum Guard {
    Is { value: Answer },
    Range { min: u32, #[serde(default, skip_serializing_if = "Option::is_none")] max: Option<u32> },
}

impl Guard {
    pub fn matches(&self, a: &Answer) -> bool {
        match (self, a) {
            (Guard::Is { value }, a) => value == a,
            (Guard::Range { min, max }, Answer::Count(n)) => n >= min && max.is_none_or(|m| *n <= m),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub when: Guard,
    pub goto: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "kebab-case")]
pub enum Effect {
    SetCategory { category: ProblemCategory },
    Add {
        section: Section,
        metric: String,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        params: BTreeMap<String, serde_json::Value>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        optional: bool,
    },
    Criterion { criterion: CriterionKind },
    Strategy { strategy: StrategyKind },
    PunishDoubleAssignments { punish: bool },
    AllowMerges,
    ThresholdVote { direction: Vote },
    StratifyBySize,
    ClassAggregation { mode: ClassAggregation },
    Hierarchy { keys: Vec<String> },
    DetectionAggregation { mode: ApAggregation },
    Warn { text: String },
    /// Warning attached only when the item has the given answer. Never blocks.
    WarnIf { item: String, value: Answer, text: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuideOption {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub pros: Vec<String>,
    #[serde(default)]
    pub cons: Vec<String>,
    pub effects: Vec<Effect>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuideSpec {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    pub options: Vec<GuideOption>,
}

impl GuideSpec {
    /// Metric ids an option would add.
    pub fn option_metrics(opt: &GuideOption) -> Vec<&str> {
        opt.effects
            .iter()
            .filter_map(|e| match e {
                Effect::Add { metric, .. } => Some(metric.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeKind {
    /// Go to `known` when the item is answered, else `unknown`.
    Known { item: String, known: String, unknown: String },
    Question { item: String, arms: Vec<Arm> },
    Action { effects: Vec<Effect>, #[serde(default)] next: Option<String> },
    Guide { guide: GuideSpec, #[serde(default)] next: Option<String> },
    Call { target: String, #[serde(default)] next: Option<String> },
    Fail { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub subprocess: String,
    pub anchor: String,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionGraph {
    pub version: String,
    pub entry: String,
    /// Entry node per category path.
    pub categories: BTreeMap<String, String>,
    pub nodes: Vec<Node>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl DecisionGraph {
    pub fn new(version: &str, entry: &str, categories: BTreeMap<String, String>, nodes: Vec<Node>) -> Result<Self> {
        let mut g = Self { version: version.into(), entry: entry.into(), categories, nodes, index: BTreeMap::new() };
        g.reindex()?;
        g.validate()?;
        Ok(g)
    }

    /// The built-in graph.
    pub fn standard() -> &'static DecisionGraph {
        static G: OnceLock<DecisionGraph> = OnceLock::new();
        G.get_or_init(|| graph::build().expect("built-in graph is valid"))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: DecisionGraph = serde_json::from_str(s).map_err(|e| Error::Schema(format!("graph: {e}")))?;
        Self::new(&g.version.clone(), &g.entry.clone(), g.categories.clone(), g.nodes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, n) in self.nodes.iter().enumerate() {
            if self.index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node id {}", n.id)));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.index.get(id).map(|&i| &self.nodes[i]).ok_or_else(|| Error::Schema(format!("unknown node {id}")))
    }

    fn successors(n: &Node) -> Vec<&str> {
        match &n.kind {
            NodeKind::Known { known, unknown, .. } => vec![known, unknown],
            NodeKind::Question { arms, .. } => arms.iter().map(|a| a.goto.as_str()).collect(),
            NodeKind::Action { next, .. } | NodeKind::Guide { next, .. } => next.iter().map(|s| s.as_str()).collect(),
            NodeKind::Call { target, next } => std::iter::once(target.as_str()).chain(next.as_deref()).collect(),
            NodeKind::Fail { .. } => vec![],
        }
    }

    /// Structural checks: targets exist, no cycles, every node reachable,
    /// question arms exhaustive and disjoint over the item domain.
    pub fn validate(&self) -> Result<()> {
        for n in &self.nodes {
            for s in Self::successors(n) {
                self.node(s).map_err(|_| Error::Schema(format!("{} points to unknown node {s}", n.id)))?;
            }
            match &n.kind {
                NodeKind::Question { item, arms } => check_arms(&n.id, item, arms)?,
                NodeKind::Known { item, .. } => {
                    item_spec(item).ok_or_else(|| Error::Schema(format!("{}: unknown item {item}", n.id)))?;
                }
                NodeKind::Guide { guide, .. } if guide.options.is_empty() => {
                    return Err(Error::Schema(format!("{}: guide without options", n.id)))
                }
                NodeKind::Action { .. } | NodeKind::Guide { .. } => {
                    let effects: Vec<&Effect> = match &n.kind {
                        NodeKind::Guide { guide, .. } => guide.options.iter().flat_map(|o| &o.effects).collect(),
                        _ => effects_of(n),
                    };
                    for e in effects {
                        if let Effect::Add { metric, .. } = e {
                            catalog::metric(metric).ok_or_else(|| Error::Schema(format!("{}: unknown metric {metric}", n.id)))?;
                        }
                    }
                }
                _ => {}
            }
        }
        // Cycle check (white/grey/black DFS) and reachability.
        let mut state = vec![0u8; self.nodes.len()];
        let entry = self.index[&self.entry];
        let mut stack = vec![(entry, false)];
        while let Some((i, done)) = stack.pop() {
            if done {
                state[i] = 2;
                continue;
            }
            if state[i] == 2 {
                continue;
            }
            state[i] = 1;
            stack.push((i, true));
            for s in Self::successors(&self.nodes[i]) {
                let j = self.index[s];
                match state[j] {
                    1 => return Err(Error::Schema(format!("cycle through {s}"))),
                    0 => stack.push((j, false)),
                    _ => {}
                }
            }
        }
        if let Some(n) = self.nodes.iter().zip(&state).find(|(_, s)| **s == 0) {
            return Err(Error::Schema(format!("node {} unreachable", n.0.id)));
        }
        Ok(())
    }

    /// Question items reachable from a category's entry node.
    pub fn relevant_items(&self, category: ProblemCategory) -> Vec<String> {
        let Some(start) = self.categories.get(category.as_str()) else { return vec![] };
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack = vec![start.as_str()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let n = self.node(id).expect("validated");
            if let NodeKind::Question { item, .. } = &n.kind {
                if !out.contains(item) {
                    out.push(item.clone());
                }
            }
            stack.extend(Self::successors(n).into_iter().rev());
        }
        out
    }

    /// Nodes per subprocess tag.
    pub fn subprocess_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for n in &self.nodes {
            *m.entry(n.subprocess.clone()).or_insert(0) += 1;
        }
        m
    }
}

fn effects_of(n: &Node) -> Vec<&Effect> {
    match &n.kind {
        NodeKind::Action { effects, .. } => effects.iter().collect(),
        _ => vec![],
    }
}

fn check_arms(node: &str, item: &str, arms: &[Arm]) -> Result<()> {
    let spec = item_spec(item).ok_or_else(|| Error::Schema(format!("{node}: unknown item {item}")))?;
    let err = |m: String| Err(Error::Schema(format!("{node} ({item}): {m}")));
    match spec.domain {
        Domain::Bool => {
            for v in [true, false] {
                let k = arms.iter().filter(|a| a.when.matches(&Answer::Flag(v))).count();
                if k != 1 {
                    return err(format!("{k} arms match {v}"));
                }
            }
            if arms.len() != 2 {
                return err("boolean question needs exactly two arms".into());
            }
        }
        Domain::Choice { options } => {
            for o in options {
                let k = arms.iter().filter(|a| a.when.matches(&Answer::Choice(o.to_string()))).count();
                if k != 1 {
                    return err(format!("{k} arms match {o}"));
                }
            }
            if arms.len() != options.len() {
                return err("arms must map one-to-one onto options".into());
            }
        }
        Domain::Count { min } => {
            let mut ranges: Vec<(u32, Option<u32>)> = Vec::new();
            for a in arms {
                match a.when {
                    Guard::Range { min, max } => ranges.push((min, max)),
                    _ => return err("count questions take range arms".into()),
                }
            }
            ranges.sort();
            let mut expect = min;
            for (i, (lo, hi)) in ranges.iter().enumerate() {
                if *lo != expect {
                    return err(format!("ranges leave a gap or overlap at {expect}"));
                }
                match hi {
                    Some(h) if *h >= *lo => expect = h + 1,
                    Some(_) => return err("empty range".into()),
                    None if i + 1 == ranges.len() => return Ok(()),
                    None => return err("unbounded range before the last arm".into()),
                }
            }
            return err("ranges do not extend to infinity".into());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- pool

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub section: Section,
    pub metric: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub optional: bool,
    /// Node or guide that added the entry.
    pub source: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DetectionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criterion: Option<CriterionKind>,
    /// Empty for criteria without a threshold; several values are averaged.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyKind>,
    #[serde(default)]
    pub punish_double_assignments: bool,
    #[serde(default)]
    pub allow_merges: bool,
    #[serde(default)]
    pub stratify_by_size: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AggregationDefaults {
    pub nan_handling: NanHandling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_aggregation: Option<ClassAggregation>,
    #[serde(default)]
    pub hierarchy: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_aggregation: Option<ApAggregation>,
}

impl Default for AggregationDefaults {
    fn default() -> Self {
        Self { nan_handling: NanHandling::WorstValue, class_aggregation: None, hierarchy: vec![], detection_aggregation: None }
    }
}

/// Output of the recommender.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricPool {
    pub graph_version: String,
    pub category: ProblemCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<u32>,
    pub entries: Vec<PoolEntry>,
    /// Entries that differ for classes with FP3.* overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<String, Vec<PoolEntry>>,
    #[serde(default)]
    pub pending: Vec<GuideSpec>,
    #[serde(default)]
    pub resolved: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionConfig>,
    pub aggregation: AggregationDefaults,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricPool {
    pub fn metrics(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.metric.as_str()).collect()
    }

    pub fn has(&self, metric: &str) -> bool {
        self.entries.iter().any(|e| e.metric == metric)
    }

    pub fn section(&self, s: Section) -> Vec<&PoolEntry> {
        self.entries.iter().filter(|e| e.section == s).collect()
    }

    pub fn pending_guide(&self, id: &str) -> Option<&GuideSpec> {
        self.pending.iter().find(|g| g.id == id)
    }

    /// Nonempty: something to compute or something left to choose.
    pub fn is_nonempty(&self) -> bool {
        !self.entries.is_empty() || !self.pending.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("pool: {e}")))
    }
}

// ---------------------------------------------------------------- traversal

/// Result of a traversal that did not fail outright.
#[derive(Clone, Debug)]
pub struct Run {
    pub category: Option<ProblemCategory>,
    pub pool: Builder,
    /// Items read along the path, in order.
    pub consulted: Vec<String>,
    /// Node and item where traversal stopped for lack of an answer.
    pub blocked: Option<Blocked>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blocked {
    pub node: String,
    pub item: String,
    /// Items that may be answered instead (skipped shortcuts on the path).
    pub alternatives: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Builder {
    entries: Vec<PoolEntry>,
    pending: Vec<GuideSpec>,
    resolved: BTreeMap<String, String>,
    detection: DetectionConfig,
    detection_touched: bool,
    votes: Vec<Vote>,
    aggregation: AggregationDefaults,
    warnings: Vec<String>,
}

impl Builder {
    fn apply(&mut self, e: &Effect, source: &str, fp: &Fingerprint, category: &mut Option<ProblemCategory>) {
        match e {
            Effect::SetCategory { category: c } => *category = Some(*c),
            Effect::Add { section, metric, params, optional } => {
                let entry = PoolEntry { section: *section, metric: metric.clone(), params: params.clone(), optional: *optional, source: source.into() };
                let dup = self.entries.iter_mut().find(|x| x.section == entry.section && x.metric == entry.metric && x.params == entry.params);
                match dup {
                    Some(x) => x.optional &= entry.optional,
                    None => self.entries.push(entry),
                }
            }
            Effect::Criterion { criterion } => {
                self.detection_touched = true;
                self.detection.criterion = Some(*criterion);
            }
            Effect::Strategy { strategy } => {
                self.detection_touched = true;
                self.detection.strategy = Some(*strategy);
            }
            Effect::PunishDoubleAssignments { punish } => {
                self.detection_touched = true;
                self.detection.punish_double_assignments = *punish;
            }
            Effect::AllowMerges => {
                self.detection_touched = true;
                self.detection.allow_merges = true;
            }
            Effect::ThresholdVote { direction } => {
                self.detection_touched = true;
                self.votes.push(*direction);
            }
            Effect::StratifyBySize => {
                self.detection_touched = true;
                self.detection.stratify_by_size = true;
            }
            Effect::ClassAggregation { mode } => self.aggregation.class_aggregation = Some(*mode),
            Effect::Hierarchy { keys } => self.aggregation.hierarchy = keys.clone(),
            Effect::DetectionAggregation { mode } => self.aggregation.detection_aggregation = Some(*mode),
            Effect::Warn { text } => self.warn(text),
            Effect::WarnIf { item, value, text } => {
                if fp.get(item) == Some(value) {
                    self.warn(text)
                }
            }
        }
    }

    fn warn(&mut self, text: &str) {
        if !self.warnings.iter().any(|w| w == text) {
            self.warnings.push(text.to_string());
        }
    }

    /// Localization threshold from the collected votes.
    fn resolve_thresholds(&mut self) {
        let Some(c) = self.detection.criterion else {
            if self.detection_touched && !self.votes.is_empty() {
                self.warn("localization threshold follows the criterion chosen in the pending guide");
            }
            self.detection.thresholds = resolve_overlap_thresholds(&self.votes).0;
            return;
        };
        if !c.needs_threshold() {
            self.detection.thresholds.clear();
        } else if c == CriterionKind::CenterDistance {
            self.detection.thresholds = vec![DEFAULT_CENTER_DISTANCE];
            self.warn("center-distance threshold is a placeholder; set it to the clinically tolerated offset");
        } else {
            let (t, note) = resolve_overlap_thresholds(&self.votes);
            self.detection.thresholds = t;
            if let Some(n) = note {
                self.warn(&n);
            }
        }
    }

    pub fn finish(mut self, category: ProblemCategory, class_count: Option<u32>) -> MetricPool {
        let detection = if category.is_object_level() {
            self.resolve_thresholds();
            Some(self.detection.clone())
        } else {
            None
        };
        MetricPool {
            graph_version: GRAPH_VERSION.into(),
            category,
            class_count,
            entries: self.entries,
            per_class: BTreeMap::new(),
            pending: self.pending,
            resolved: self.resolved,
            detection,
            aggregation: self.aggregation,
            warnings: self.warnings,
        }
    }
}

/// Overlap thresholds from lower/higher votes: a single documented value
/// when all votes agree, the averaged grid otherwise.
pub fn resolve_overlap_thresholds(votes: &[Vote]) -> (Vec<f64>, Option<String>) {
    let lower = votes.contains(&Vote::Lower);
    let higher = votes.contains(&Vote::Higher);
    match (lower, higher) {
        (true, false) => (vec![LOW_THRESHOLD], Some(format!("lower localization threshold recommended; using {LOW_THRESHOLD}"))),
        (false, true) => (vec![HIGH_THRESHOLD], Some(format!("higher localization threshold recommended; using {HIGH_THRESHOLD}"))),
        (true, true) => (
            crate::detection::threshold_grid(),
            Some("conflicting threshold indications; averaging over 0.5:0.05:0.9".into()),
        ),
        (false, false) => (crate::detection::threshold_grid(), None),
    }
}

fn answer_for<'a>(fp: &'a Fingerprint, item: &str) -> Option<&'a Answer> {
    fp.get(item)
}

/// Walk the graph along answered items until completion or the first
/// unanswered question.
pub fn run(graph: &DecisionGraph, fp: &Fingerprint, choices: &BTreeMap<String, String>) -> Result<Run> {
    let mut b = Builder::default();
    let mut category = None;
    let mut consulted: Vec<String> = Vec::new();
    let mut alternatives: Vec<String> = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut cur = Some(graph.entry.clone());
    let note = |c: &mut Vec<String>, item: &str| {
        if !c.iter().any(|x| x == item) {
            c.push(item.to_string());
        }
    };
    while let Some(id) = cur.take() {
        let n = graph.node(&id)?;
        let next = match &n.kind {
            NodeKind::Known { item, known, unknown } => {
                note(&mut consulted, item);
                if answer_for(fp, item).is_some() {
                    Some(known.clone())
                } else {
                    alternatives.push(item.clone());
                    Some(unknown.clone())
                }
            }
            NodeKind::Question { item, arms } => {
                note(&mut consulted, item);
                match answer_for(fp, item) {
                    None => {
                        return Ok(Run {
                            category,
                            pool: b,
                            consulted,
                            blocked: Some(Blocked { node: id.clone(), item: item.clone(), alternatives }),
                        })
                    }
                    Some(a) => {
                        let arm = arms
                            .iter()
                            .find(|arm| arm.when.matches(a))
                            .ok_or_else(|| Error::invalid(format!("{item} = {a} matches no branch at {id}")))?;
                        Some(arm.goto.clone())
                    }
                }
            }
            NodeKind::Action { effects, next } => {
                for e in effects {
                    if let Effect::WarnIf { item, .. } = e {
                        note(&mut consulted, item);
                    }
                    b.apply(e, &id, fp, &mut category);
                }
                next.clone()
            }
            NodeKind::Guide { guide, next } => {
                match choices.get(&guide.id) {
                    Some(choice) => {
                        let opt = guide.options.iter().find(|o| &o.id == choice).ok_or_else(|| {
                            Error::invalid(format!(
                                "{}: {choice:?} is not an option here (options: {})",
                                guide.id,
                                guide.options.iter().map(|o| o.id.as_str()).collect::<Vec<_>>().join(", ")
                            ))
                        })?;
                        for e in &opt.effects {
                            b.apply(e, &guide.id, fp, &mut category);
                        }
                        b.resolved.insert(guide.id.clone(), choice.clone());
                    }
                    None => {
                        if !b.pending.iter().any(|g| g.id == guide.id) {
                            b.pending.push(guide.clone());
                        }
                    }
                }
                next.clone()
            }
            NodeKind::Call { target, next } => {
                if let Some(n) = next {
                    stack.push(n.clone());
                }
                Some(target.clone())
            }
            NodeKind::Fail { message } => return Err(Error::invalid(message)),
        };
        cur = next.or_else(|| stack.pop());
    }
    Ok(Run { category, pool: b, consulted, blocked: None })
}

/// Unanswered items that block traversal: every branch at an unanswered
/// question is explored, so the list is complete for the given answers.
pub fn missing_items(graph: &DecisionGraph, fp: &Fingerprint) -> Result<Vec<String>> {
    let mut missing: Vec<String> = Vec::new();
    let mut seen: HashSet<(String, Vec<String>)> = HashSet::new();
    let mut work: Vec<(String, Vec<String>)> = vec![(graph.entry.clone(), vec![])];
    while let Some((id, stack)) = work.pop() {
        if !seen.insert((id.clone(), stack.clone())) {
            continue;
        }
        let n = graph.node(&id)?;
        let mut push = |next: Option<&String>, stack: &Vec<String>| {
            let mut s = stack.clone();
            let target = match next {
                Some(t) => Some(t.clone()),
                None => s.pop(),
            };
            if let Some(t) = target {
                work.push((t, s));
            }
        };
        match &n.kind {
            NodeKind::Known { item, known, unknown } => {
                push(Some(if fp.get(item).is_some() { known } else { unknown }), &stack);
            }
            NodeKind::Question { item, arms } => match fp.get(item) {
                Some(a) => {
                    if let Some(arm) = arms.iter().find(|arm| arm.when.matches(a)) {
                        push(Some(&arm.goto), &stack);
                    }
                }
                None => {
                    if !missing.contains(item) {
                        missing.push(item.clone());
                    }
                    for arm in arms.iter().rev() {
                        push(Some(&arm.goto), &stack);
                    }
                }
            },
            NodeKind::Action { next, .. } | NodeKind::Guide { next, .. } => push(next.as_ref(), &stack),
            NodeKind::Call { target, next } => {
                let mut s = stack.clone();
                if let Some(n) = next {
                    s.push(n.clone());
                }
                work.push((target.clone(), s));
            }
            NodeKind::Fail { .. } => {}
        }
    }
    Ok(missing)
}

/// A complete recommendation plus the items the traversal read.
#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    pub pool: MetricPool,
    pub consulted: Vec<String>,
}

/// Recommend with guide choices applied (unchosen guides stay pending).
pub fn recommend_with(graph: &DecisionGraph, fp: &Fingerprint, choices: &BTreeMap<String, String>) -> Result<Recommendation> {
    let r = run(graph, fp, choices)?;
    if r.blocked.is_some() {
        return Err(Error::MissingItems(missing_items(graph, fp)?));
    }
    let category = r.category.ok_or_else(|| Error::invalid("traversal ended without a category"))?;
    let mut consulted = r.consulted;
    let mut pool = r.pool.finish(category, fp.class_count());
    for class in fp.per_class().keys() {
        let view = fp.view_for_class(class);
        let rv = run(graph, &view, choices)?;
        if rv.blocked.is_some() {
            let missing = missing_items(graph, &view)?;
            return Err(Error::MissingItems(missing.into_iter().map(|m| format!("{m} (class {class})")).collect()));
        }
        for c in rv.consulted {
            if !consulted.contains(&c) {
                consulted.push(c);
            }
        }
        let class_pool = rv.pool.finish(category, fp.class_count());
        let local = |p: &MetricPool| -> Vec<PoolEntry> {
            p.entries.iter().filter(|e| matches!(e.section, Section::PerClass | Section::Overlap | Section::Boundary)).cloned().collect()
        };
        let mine = local(&class_pool);
        if mine != local(&pool) {
            pool.per_class.insert(class.clone(), mine);
        }
        for g in class_pool.pending {
            if !pool.pending.iter().any(|p| p.id == g.id) {
                pool.pending.push(g);
            }
        }
        for w in class_pool.warnings {
            let w = format!("class {class}: {w}");
            if !pool.warnings.contains(&w) && !pool.warnings.iter().any(|x| w.ends_with(x.as_str())) {
                pool.warnings.push(w);
            }
        }
    }
    Ok(Recommendation { pool, consulted })
}

/// Recommend from a fingerprint; every guide stays pending.
pub fn recommend(fp: &Fingerprint) -> Result<MetricPool> {
    Ok(recommend_with(DecisionGraph::standard(), fp, &BTreeMap::new())?.pool)
}

#[cfg(test)]
mod tests;
