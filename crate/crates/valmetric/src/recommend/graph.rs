//! Content of the built-in decision graph.

use std::collections::BTreeMap;

use serde_json::json;

use super::*;
use crate::aggregation::ClassAggregation;
use crate::detection::{CriterionKind as Crit, StrategyKind as Strat};
use crate::model::ProblemCategory::{self, InS, ObD};
use crate::threshold::ApAggregation;

use Section::*;

const RETURN: &str = "return";

struct G {
    nodes: Vec<Node>,
    sub: &'static str,
}

fn yes(to: &str) -> (Guard, String) {
    (Guard::Is { value: Answer::Flag(true) }, to.to_string())
}

fn no(to: &str) -> (Guard, String) {
    (Guard::Is { value: Answer::Flag(false) }, to.to_string())
}

fn opt(value: &str, to: &str) -> (Guard, String) {
    (Guard::Is { value: Answer::Choice(value.into()) }, to.to_string())
}

fn range(min: u32, max: Option<u32>, to: &str) -> (Guard, String) {
    (Guard::Range { min, max }, to.to_string())
}

fn add(section: Section, metric: &str) -> Effect {
    Effect::Add { section, metric: metric.into(), params: BTreeMap::new(), optional: false }
}

fn addp(section: Section, metric: &str, params: serde_json::Value) -> Effect {
    let params = match params {
        serde_json::Value::Object(m) => m.into_iter().collect(),
        _ => unreachable!("params are objects"),
    };
    Effect::Add { section, metric: metric.into(), params, optional: false }
}

fn add_opt(section: Section, metric: &str) -> Effect {
    Effect::Add { section, metric: metric.into(), params: BTreeMap::new(), optional: true }
}

fn warn(text: &str) -> Effect {
    Effect::Warn { text: text.into() }
}

fn warn_if(item: &str, text: &str) -> Effect {
    Effect::WarnIf { item: item.into(), value: Answer::Flag(true), text: text.into() }
}

fn option(id: &str, label: &str, pros: &[&str], cons: &[&str], effects: Vec<Effect>) -> GuideOption {
    GuideOption {
        id: id.into(),
        label: label.into(),
        pros: pros.iter().map(|s| s.to_string()).collect(),
        cons: cons.iter().map(|s| s.to_string()).collect(),
        effects,
    }
}

fn guide(id: &str, title: &str, note: &str, options: Vec<GuideOption>) -> GuideSpec {
    GuideSpec { id: id.into(), title: title.into(), note: note.into(), options }
}

impl G {
    fn push(&mut self, id: &str, anchor: &str, kind: NodeKind) {
        self.nodes.push(Node { id: id.into(), subprocess: self.sub.into(), anchor: anchor.into(), kind });
    }

    fn q(&mut self, id: &str, item: &str, anchor: &str, arms: Vec<(Guard, String)>) {
        let arms = arms.into_iter().map(|(when, goto)| Arm { when, goto }).collect();
        self.push(id, anchor, NodeKind::Question { item: item.into(), arms });
    }

    fn yn(&mut self, id: &str, item: &str, anchor: &str, y: &str, n: &str) {
        self.q(id, item, anchor, vec![yes(y), no(n)]);
    }

    fn act(&mut self, id: &str, anchor: &str, effects: Vec<Effect>, next: Option<&str>) {
        self.push(id, anchor, NodeKind::Action { effects, next: next.map(Into::into) });
    }

    fn guide(&mut self, id: &str, anchor: &str, g: GuideSpec, next: Option<&str>) {
        self.push(id, anchor, NodeKind::Guide { guide: g, next: next.map(Into::into) });
    }

    fn call(&mut self, id: &str, target: &str, next: Option<&str>) {
        self.push(id, "", NodeKind::Call { target: target.into(), next: next.map(Into::into) });
    }
}

pub(super) fn build() -> Result<DecisionGraph> {
    let mut g = G { nodes: Vec::new(), sub: "-" };
    g.act(RETURN, "end of a subprocess", vec![], None);
    s1(&mut g);
    imlc(&mut g);
    sems(&mut g);
    object(&mut g, ObD);
    object(&mut g, InS);
    s2(&mut g);
    s3_image(&mut g);
    s4_image(&mut g);
    for p in ["ImLC.", "ObD.", "InS."] {
        s5(&mut g, p, p == "ImLC.");
    }
    for p in ["SemS.", "InS."] {
        s6(&mut g, p);
        s7(&mut g, p);
    }
    for (p, t) in [("ImLC.", 2), ("SemS.", 1), ("ObD.", 1), ("InS.", 1)] {
        aggregation(&mut g, p, t);
    }
    let categories = ProblemCategory::ALL.iter().map(|c| (c.as_str().to_string(), c.as_str().to_string())).collect();
    DecisionGraph::new(GRAPH_VERSION, "root", categories, g.nodes)
}

fn s1(g: &mut G) {
    g.sub = "S1";
    g.push(
        "root",
        "category known up front, otherwise derived from the task structure",
        NodeKind::Known { item: "FP1.1".into(), known: "S1.dispatch".into(), unknown: "S1.1".into() },
    );
    g.q(
        "S1.dispatch",
        "FP1.1",
        "follow the path of the chosen category",
        vec![opt("ImLC", "S1.ImLC"), opt("SemS", "S1.SemS"), opt("ObD", "S1.ObD"), opt("InS", "S1.InS")],
    );
    g.yn("S1.1", "S1.1", "labels for whole images mean image-level classification", "S1.ImLC", "S1.2");
    g.yn("S1.2", "S1.2", "tasks needing instance distinction are validated at object level", "S1.3", "S1.SemS");
    g.yn("S1.3", "FP2.1", "instances plus boundary interest mean instance segmentation", "S1.InS", "S1.ObD");
    for c in ProblemCategory::ALL {
        g.act(&format!("S1.{c}"), "category fixed", vec![Effect::SetCategory { category: c }], Some(c.as_str()));
    }
}

fn imlc(g: &mut G) {
    g.sub = "ImLC";
    g.q(
        "ImLC",
        "class-count",
        "image-level classification needs at least two classes",
        vec![range(1, Some(1), "ImLC.too-few"), range(2, None, "ImLC.init")],
    );
    g.push("ImLC.too-few", "", NodeKind::Fail { message: "image-level classification needs class-count >= 2".into() });
    g.act(
        "ImLC.init",
        "pitfall notices",
        vec![
            warn_if("FP5.3", "invalid predictions possible: count them as errors (worst value), do not drop them"),
            warn_if("FP3.4", "hierarchical labels: consider application-specific metrics; class correlations are not corrected"),
            warn_if("FP4.6", "cases without any positive reference: per-class metrics may be undefined and follow the NaN policy"),
        ],
        Some("ImLC.s2"),
    );
    g.call("ImLC.s2", "S2", Some("ImLC.s3"));
    g.call("ImLC.s3", "S3", Some("ImLC.s4"));
    g.call("ImLC.s4", "S4", Some("ImLC.s5"));
    g.call("ImLC.s5", "ImLC.S5", Some("ImLC.agg"));
    g.call("ImLC.agg", "ImLC.AGG", None);
}

fn sems(g: &mut G) {
    g.sub = "SemS";
    g.q("SemS", "class-count", "number of foreground classes", vec![range(1, None, "SemS.init")]);
    g.act(
        "SemS.init",
        "pitfall notices",
        vec![
            warn_if("FP3.5", "touching or overlapping structures: consider phrasing the task as instance segmentation"),
            warn_if("FP3.6", "disconnected structures: boundary distances mix components; consider instance-level validation"),
            warn_if("FP4.6", "empty references possible: overlap and distance metrics are undefined there and follow the NaN policy"),
            warn_if("FP5.2", "empty predictions possible: distance metrics fall back to the worst value (image diagonal)"),
            warn_if("FP2.2", "volume of interest: complement overlap metrics with an application-specific volume error"),
            warn_if("FP3.4", "hierarchical labels: consider application-specific metrics; class correlations are not corrected"),
        ],
        Some("SemS.s6"),
    );
    g.call("SemS.s6", "SemS.S6", Some("SemS.s7"));
    g.call("SemS.s7", "SemS.S7", Some("SemS.agg"));
    g.call("SemS.agg", "SemS.AGG", None);
}

fn object(g: &mut G, c: ProblemCategory) {
    let p = c.as_str();
    g.sub = if c == ObD { "ObD" } else { "InS" };
    let id = |s: &str| format!("{p}.{s}");
    g.q(p, "class-count", "number of foreground classes", vec![range(1, None, &id("init"))]);
    g.act(
        &id("init"),
        "object-level defaults and pitfall notices",
        vec![
            Effect::DetectionAggregation { mode: ApAggregation::PerDataset },
            warn_if("FP4.6", "images without reference objects: sensitivity is undefined there and excluded when averaging per image"),
            warn_if("FP5.3", "invalid predictions possible: count them as errors (worst value), do not drop them"),
            warn_if("FP3.6", "disconnected structures: parts may be matched as separate objects"),
            warn_if("FP3.4", "hierarchical labels: consider application-specific metrics; class correlations are not corrected"),
        ],
        Some(&id("s8")),
    );
    g.call(&id("s8"), &id("S8"), Some(&id("s9")));
    g.call(&id("s9"), &id("S9"), Some(&id("s3")));
    g.call(&id("s3"), &id("S3"), Some(&id("s4")));
    if c == InS {
        g.call(&id("s4"), &id("S4"), Some(&id("s6")));
        g.call(&id("s6"), "InS.S6", Some(&id("s7")));
        g.call(&id("s7"), "InS.S7", Some(&id("s5")));
    } else {
        g.call(&id("s4"), &id("S4"), Some(&id("s5")));
    }
    g.yn(&id("s5"), "FP5.1", "calibration needs predicted scores", &id("s5.call"), &id("agg"));
    g.call(&id("s5.call"), &format!("{p}.S5"), Some(&id("agg")));
    g.call(&id("agg"), &format!("{p}.AGG"), None);

    s8(g, c);
    s9(g, c);
    s3_object(g, c);
    s4_object(g, c);
}

fn s2(g: &mut G) {
    g.sub = "S2";
    let rules = |t: &str, none: &str| {
        vec![opt("target-value", t), opt("optimization", t), opt("argmax", t), opt("cost-benefit", t), opt("none", none)]
    };
    g.q("S2", "FP2.6", "multi-class metrics assess decisions", rules("S2.severity", "S2.none"));
    g.yn("S2.none", "FP5.1", "without scores the predicted labels are the decisions", RETURN, "S2.labels");
    g.act(
        "S2.labels",
        "labels only",
        vec![warn("no class scores: predicted labels are treated as the decisions")],
        Some("S2.severity"),
    );
    g.yn("S2.severity", "FP2.5.2", "unequal confusion severity calls for cost-aware metrics", "S2.costs", "S2.interest");
    g.yn("S2.costs", "FP2.5.4", "cost-aware metrics need confusion costs", "S2.DG2.1", "S2.nocosts");
    g.guide(
        "S2.DG2.1",
        "severity with known costs",
        guide(
            "DG2.1",
            "Weighted Cohen's Kappa versus Expected Cost",
            "Both weigh individual confusions. Expected Cost uses the stated costs directly.",
            vec![
                option(
                    "EC",
                    "Expected Cost with the stated cost matrix",
                    &["costs enter directly", "not a chance-corrected agreement statistic"],
                    &["needs a full cost matrix"],
                    vec![addp(MultiClass, "EC", json!({"costs": "user", "normalized": false}))],
                ),
                option(
                    "WCK",
                    "Weighted Cohen's Kappa",
                    &["established for ordinal classes"],
                    &["designed for symmetric rater agreement", "prevalence-dependent"],
                    vec![addp(MultiClass, "WCK", json!({"weights": "quadratic"}))],
                ),
            ],
        ),
        None,
    );
    g.act(
        "S2.nocosts",
        "costs missing",
        vec![warn("unequal confusion severity but no costs: proceeding as if severities were equal; supply costs to use Expected Cost")],
        Some("S2.interest"),
    );
    g.yn("S2.interest", "FP2.5.1", "unequal class interest", "S2.mismatch", "S2.equal.prev");
    g.yn("S2.mismatch", "FP2.5.3", "prevalence and importance disagree", "S2.ec", "S2.unequal.prev");
    g.act(
        "S2.ec",
        "importance expressed as costs",
        vec![
            addp(MultiClass, "EC", json!({"costs": "user", "normalized": false})),
            warn("Expected Cost: state costs that reflect class importance"),
        ],
        None,
    );
    g.yn("S2.unequal.prev", "FP4.2", "prevalence-dependent metrics need representative prevalences", "S2.DG2.3", "S2.DG2.2");
    g.yn("S2.equal.prev", "FP4.2", "prevalence-dependent metrics need representative prevalences", "S2.compensate", "S2.DG2.2");
    g.yn("S2.compensate", "FP2.5.5", "imbalance compensation", "S2.imbalance", "S2.accuracy");
    g.yn("S2.imbalance", "FP4.1", "accuracy is misleading under imbalance", "S2.DG2.3", "S2.accuracy.balanced");
    g.act("S2.accuracy", "plain accuracy", vec![add(MultiClass, "Accuracy")], None);
    g.act(
        "S2.accuracy.balanced",
        "balanced data",
        vec![add(MultiClass, "Accuracy"), warn("balanced classes: accuracy and balanced accuracy coincide up to sampling noise")],
        None,
    );
    g.guide(
        "S2.DG2.2",
        "prevalence-independent choice",
        guide(
            "DG2.2",
            "Balanced Accuracy versus Expected Cost",
            "Prevalences of the data do not reflect the population or classes matter unequally.",
            vec![
                option("BA", "Balanced Accuracy", &["easy to interpret", "prevalence-independent"], &["fixed equal class weighting"], vec![add(MultiClass, "BA")]),
                option(
                    "EC",
                    "Expected Cost with costs 1/(C P_i)",
                    &["generalizes to arbitrary costs and priors"],
                    &["less familiar"],
                    vec![addp(MultiClass, "EC", json!({"costs": "balanced", "normalized": false}))],
                ),
            ],
        ),
        None,
    );
    g.guide(
        "S2.DG2.3",
        "imbalance with representative prevalences",
        guide(
            "DG2.3",
            "Balanced Accuracy versus MCC versus normalized Expected Cost",
            "The three can disagree sharply on the same confusion matrix.",
            vec![
                option("BA", "Balanced Accuracy", &["prevalence-independent"], &["ignores predictive values"], vec![add(MultiClass, "BA")]),
                option("MCC", "Matthews Correlation Coefficient", &["uses all four cells"], &["undefined for empty rows or columns"], vec![add(MultiClass, "MCC")]),
                option(
                    "ECN",
                    "Expected Cost normalized by the best naive classifier (0-1 costs)",
                    &["direct comparison against naive systems"],
                    &["needs priors and costs"],
                    vec![addp(MultiClass, "EC", json!({"costs": "zero-one", "normalized": true}))],
                ),
            ],
        ),
        None,
    );
}

fn target_option(id: &str, metric: &str, target: &str, value: f64) -> GuideOption {
    option(
        id,
        &format!("{metric} at {target} = {value}"),
        &["operating point fixed by the application"],
        &["target value must be stated"],
        vec![addp(PerClass, metric, json!({"target": target, "target-value": value}))],
    )
}

fn s3_image(g: &mut G) {
    g.sub = "S3";
    g.q(
        "S3",
        "FP2.6",
        "per-class metrics follow the decision rule",
        vec![
            opt("target-value", "S3.DG3.1"),
            opt("optimization", "S3.prev"),
            opt("argmax", "S3.prev"),
            opt("cost-benefit", "S3.cb"),
            opt("none", "S3.none"),
        ],
    );
    g.yn("S3.none", "FP5.1", "labels without scores act as argmax decisions", RETURN, "S3.prev");
    g.guide(
        "S3.DG3.1",
        "target value",
        guide(
            "DG3.1",
            "Metric at a target value of another metric",
            "Report one metric at the threshold where the target metric reaches its value.",
            vec![
                target_option("Specificity@Sensitivity", "Specificity", "Sensitivity", 0.95),
                target_option("Sensitivity@Specificity", "Sensitivity", "Specificity", 0.95),
                target_option("Sensitivity@PPV", "Sensitivity", "PPV", 0.95),
                target_option("Specificity@NPV", "Specificity", "NPV", 0.95),
            ],
        ),
        None,
    );
    g.q("S3.cb", "class-count", "net benefit is defined for binary decisions", vec![range(1, Some(2), "S3.DG3.2"), range(3, None, "S3.cb.multi")]);
    g.guide(
        "S3.DG3.2",
        "cost-benefit rule",
        guide(
            "DG3.2",
            "Net Benefit versus Expected Cost",
            "Both put benefits and harms on one scale.",
            vec![
                option(
                    "NB",
                    "Net Benefit at the risk threshold",
                    &["clinically interpretable", "decision curves over thresholds"],
                    &["binary only"],
                    vec![addp(PerClass, "NB", json!({"risk-threshold": 0.1}))],
                ),
                option(
                    "EC",
                    "Expected Cost",
                    &["handles arbitrary costs"],
                    &["needs a cost matrix"],
                    vec![addp(MultiClass, "EC", json!({"costs": "user", "normalized": false}))],
                ),
            ],
        ),
        None,
    );
    g.act(
        "S3.cb.multi",
        "multi-class cost-benefit",
        vec![
            addp(MultiClass, "EC", json!({"costs": "user", "normalized": false})),
            warn("net benefit is binary-only; cost-benefit decisions with more than two classes use Expected Cost"),
        ],
        None,
    );
    g.yn("S3.prev", "FP4.2", "representative prevalences admit prevalence-dependent metrics", "S3.DG3.4", "S3.DG3.3");
    let sens = || vec![add(PerClass, "Sensitivity"), add_opt(PerClass, "Specificity")];
    g.guide(
        "S3.DG3.3",
        "prevalences not representative",
        guide(
            "DG3.3",
            "LR+ versus Sensitivity",
            "Both are prevalence-independent.",
            vec![
                option("LR+", "Positive Likelihood Ratio", &["summarizes a binary test"], &["unbounded"], vec![add(PerClass, "LR+")]),
                option("Sensitivity", "Sensitivity (with Specificity)", &["easy to interpret"], &["needs a complementary metric"], sens()),
            ],
        ),
        None,
    );
    g.guide(
        "S3.DG3.4",
        "prevalences representative",
        guide(
            "DG3.4",
            "LR+ versus Sensitivity versus F-beta",
            "Choose beta by the relative cost of false negatives and false positives (beta > 1 favours recall).",
            vec![
                option("LR+", "Positive Likelihood Ratio", &["summarizes a binary test"], &["unbounded"], vec![add(PerClass, "LR+")]),
                option("Sensitivity", "Sensitivity (with Specificity)", &["easy to interpret"], &["needs a complementary metric"], sens()),
                option(
                    "F-beta",
                    "F-beta Score",
                    &["combines sensitivity and PPV"],
                    &["ignores true negatives", "beta must be chosen"],
                    vec![addp(PerClass, "F-beta", json!({"beta": 1.0}))],
                ),
            ],
        ),
        None,
    );
}

fn s4_image(g: &mut G) {
    g.sub = "S4";
    g.yn("S4", "FP5.1", "multi-threshold metrics need scores", "S4.prev", RETURN);
    g.yn("S4.prev", "FP4.2", "AP depends on prevalence", "S4.DG4.1", "S4.auroc");
    g.act("S4.auroc", "prevalence-independent ranking", vec![add(MultiThreshold, "AUROC")], None);
    g.guide(
        "S4.DG4.1",
        "representative prevalences",
        guide(
            "DG4.1",
            "AUROC versus AP",
            "",
            vec![
                option("AUROC", "AUROC", &["prevalence-independent"], &["optimistic under strong imbalance"], vec![add(MultiThreshold, "AUROC")]),
                option("AP", "Average Precision", &["focuses on the positive class"], &["prevalence-dependent"], vec![add(MultiThreshold, "AP")]),
                option("both", "AUROC and AP", &["complementary views"], &["two numbers to report"], vec![add(MultiThreshold, "AUROC"), add(MultiThreshold, "AP")]),
            ],
        ),
        None,
    );
}

fn s8(g: &mut G, c: ProblemCategory) {
    let p = c.as_str();
    g.sub = "S8";
    let id = |s: &str| format!("{p}.S8{s}");
    if c == InS {
        g.guide(
            &id(""),
            "instance masks are available",
            guide(
                "DG8.1",
                "Mask IoU versus Boundary IoU versus IoR",
                "",
                vec![
                    option("mask-iou", "Mask IoU", &["standard"], &["insensitive to boundary detail for large objects"], vec![Effect::Criterion { criterion: Crit::MaskIou }]),
                    option("boundary-iou", "Boundary IoU", &["boundary-sensitive"], &["band width must be chosen"], vec![Effect::Criterion { criterion: Crit::BoundaryIou }]),
                    option(
                        "ior",
                        "Intersection over Reference",
                        &["lets one prediction cover several references"],
                        &["rewards oversized predictions"],
                        vec![Effect::Criterion { criterion: Crit::Ior }, Effect::AllowMerges],
                    ),
                ],
            ),
            Some(&id(".thr")),
        );
    } else {
        g.q(
            &id(""),
            "FP2.4",
            "position only versus rough outline",
            vec![opt("rough-outline", &id(".outline")), opt("overall-position", &id(".position"))],
        );
        g.q(
            &id(".outline"),
            "FP4.4",
            "rough outline interest uses box or approximated IoU",
            vec![opt("exact-outline", &id(".approx")), opt("rough-outline", &id(".box")), opt("center-point", &id(".points"))],
        );
        g.act(&id(".approx"), "boxes derived from masks", vec![Effect::Criterion { criterion: Crit::ApproxIou }], Some(&id(".thr")));
        g.act(&id(".box"), "box references", vec![Effect::Criterion { criterion: Crit::BoxIou }], Some(&id(".thr")));
        g.act(
            &id(".points"),
            "point references cannot give outlines",
            vec![
                Effect::Criterion { criterion: Crit::CenterDistance },
                warn("outline interest but only center points annotated: using center distance"),
            ],
            Some(&id(".thr")),
        );
        g.q(
            &id(".position"),
            "FP4.4",
            "position-only criteria depend on the reference format",
            vec![opt("exact-outline", &id(".DG8.2a")), opt("rough-outline", &id(".DG8.2b")), opt("center-point", &id(".center"))],
        );
        let center = || option("center-distance", "Center distance", &["tunable tolerance"], &["center may lie outside tubular or disconnected objects"], vec![Effect::Criterion { criterion: Crit::CenterDistance }]);
        let inside = || option("point-inside", "Point inside mask/box", &["no threshold"], &["no tolerance tuning"], vec![Effect::Criterion { criterion: Crit::PointInside }]);
        let gt0 = || {
            option(
                "mask-iou-gt-zero",
                "Mask IoU > 0",
                &["no threshold"],
                &["large predictions can hit several references"],
                vec![Effect::Criterion { criterion: Crit::MaskIouGtZero }],
            )
        };
        g.guide(
            &id(".DG8.2a"),
            "mask references, position only",
            guide("DG8.2", "Mask IoU > 0 versus Center Distance versus Point inside", "", vec![gt0(), center(), inside()]),
            Some(&id(".thr")),
        );
        g.guide(
            &id(".DG8.2b"),
            "box references, position only",
            guide("DG8.2", "Mask IoU > 0 versus Center Distance versus Point inside", "Mask IoU > 0 needs mask references.", vec![center(), inside()]),
            Some(&id(".thr")),
        );
        g.act(&id(".center"), "point references", vec![Effect::Criterion { criterion: Crit::CenterDistance }], Some(&id(".thr")));
    }
    let low = |extra: Vec<Effect>| {
        let mut v = vec![Effect::ThresholdVote { direction: Vote::Lower }];
        v.extend(extra);
        v
    };
    g.yn(&id(".thr"), "FP3.1", "small structures favour a lower threshold", &id(".thr.small"), &id(".thr.size"));
    g.act(&id(".thr.small"), "lower threshold", low(vec![]), Some(&id(".thr.size")));
    g.yn(&id(".thr.size"), "FP3.2", "size variability favours a lower threshold and size stratification", &id(".thr.var"), &id(".thr.noise"));
    g.act(&id(".thr.var"), "lower threshold, stratify", low(vec![Effect::StratifyBySize]), Some(&id(".thr.noise")));
    g.yn(&id(".thr.noise"), "FP4.3.1", "noisy references favour a lower threshold", &id(".thr.noisy"), &id(".thr.touch"));
    g.act(&id(".thr.noisy"), "lower threshold", low(vec![]), Some(&id(".thr.touch")));
    g.yn(&id(".thr.touch"), "FP3.5", "touching structures favour a higher threshold", &id(".thr.high"), RETURN);
    g.act(&id(".thr.high"), "higher threshold", vec![Effect::ThresholdVote { direction: Vote::Higher }], None);
}

fn s9(g: &mut G, c: ProblemCategory) {
    let p = c.as_str();
    g.sub = "S9";
    let id = |s: &str| format!("{p}.S9{s}");
    g.yn(&id(""), "FP5.1", "scores define the matching order", &id(".score"), &id(".overlap"));
    g.act(&id(".score"), "greedy matching by score", vec![Effect::Strategy { strategy: Strat::GreedyByScore }], Some(&id(".punish")));
    g.yn(&id(".overlap"), "FP5.4", "overlapping predictions rule out IoU > 0.5 matching", &id(".DG9.1a"), &id(".DG9.1b"));
    let greedy = || {
        option(
            "greedy-by-localization",
            "Greedy by localization quality",
            &["simple, mirrors a sequential reader"],
            &["can be suboptimal overall"],
            vec![Effect::Strategy { strategy: Strat::GreedyByLocalization }],
        )
    };
    let hungarian = || {
        option(
            "hungarian",
            "Optimal (Hungarian) matching",
            &["globally optimal total localization"],
            &["optimistic view of ambiguous outputs"],
            vec![Effect::Strategy { strategy: Strat::Hungarian }],
        )
    };
    let half = option(
        "overlap-gt-half",
        "Match pairs with IoU > 0.5",
        &["unique matches without any search"],
        &["IoU criteria only", "infeasible with overlapping predictions"],
        vec![Effect::Strategy { strategy: Strat::OverlapGtHalf }],
    );
    let title = "Assignment without predicted scores";
    g.guide(&id(".DG9.1a"), "overlapping predictions", guide("DG9.1", title, "", vec![greedy(), hungarian()]), Some(&id(".punish")));
    g.guide(&id(".DG9.1b"), "non-overlapping predictions", guide("DG9.1", title, "", vec![greedy(), hungarian(), half]), Some(&id(".punish")));
    g.yn(&id(".punish"), "FP2.5.8", "surplus matches of one reference", &id(".punish.yes"), &id(".punish.no"));
    g.act(&id(".punish.yes"), "double assignments count as FP", vec![Effect::PunishDoubleAssignments { punish: true }], None);
    g.act(&id(".punish.no"), "double assignments ignored", vec![Effect::PunishDoubleAssignments { punish: false }], None);
}

fn s3_object(g: &mut G, c: ProblemCategory) {
    let p = c.as_str();
    g.sub = "S3";
    let id = |s: &str| format!("{p}.S3{s}");
    g.yn(&id(""), "FP5.1", "without scores only a counting metric applies", &id(".rule"), &id(".count"));
    let t = id(".count");
    g.q(
        &id(".rule"),
        "FP2.6",
        "per-class metric follows the decision rule",
        vec![opt("target-value", &id(".DG3.1")), opt("optimization", &t), opt("argmax", &t), opt("cost-benefit", &t), opt("none", &t)],
    );
    g.guide(
        &id(".DG3.1"),
        "object-level target value",
        guide(
            "DG3.1",
            "Metric at a target value of another metric",
            "Object-level tasks have no true negatives.",
            vec![
                target_option("PPV@Sensitivity", "PPV", "Sensitivity", 0.95),
                target_option("Sensitivity@PPV", "Sensitivity", "PPV", 0.95),
                target_option("FPPI@Sensitivity", "FPPI", "Sensitivity", 0.95),
            ],
        ),
        None,
    );
    let fbeta = || addp(PerClass, "F-beta", json!({"beta": 1.0}));
    if c == InS {
        g.guide(
            &t,
            "instance segmentation counting metric",
            guide(
                "DG3.6",
                "F-beta versus Panoptic Quality",
                "Choose beta by the relative cost of missed and spurious objects.",
                vec![
                    option("F-beta", "F-beta Score plus separate overlap metrics", &["detection and segmentation stay separate"], &["two numbers"], vec![fbeta()]),
                    option("PQ", "Panoptic Quality", &["one number for detection and segmentation"], &["hides which part failed"], vec![add(PerClass, "PQ")]),
                ],
            ),
            None,
        );
    } else {
        g.act(
            &t,
            "object-level counting metric",
            vec![fbeta(), warn("F-beta: beta > 1 favours finding objects, beta < 1 favours avoiding false detections")],
            None,
        );
    }
}

fn s4_object(g: &mut G, c: ProblemCategory) {
    let p = c.as_str();
    g.sub = "S4";
    let id = |s: &str| format!("{p}.S4{s}");
    g.yn(&id(""), "FP5.1", "multi-threshold metrics need scores", &id(".DG4.2"), RETURN);
    g.guide(
        &id(".DG4.2"),
        "object-level ranking",
        guide(
            "DG4.2",
            "AP versus FROC Score",
            "",
            vec![
                option("AP", "Average Precision", &["standard in computer vision"], &["ignores images without objects"], vec![add(MultiThreshold, "AP")]),
                option(
                    "FROC",
                    "FROC Score",
                    &["operating points in FPs per image", "penalizes FPs on empty images"],
                    &["depends on the FPPI grid"],
                    vec![addp(MultiThreshold, "FROC", json!({"fppi": crate::counting::FPPI_GRID.to_vec()}))],
                ),
            ],
        ),
        None,
    );
}

fn s5(g: &mut G, p: &str, image_level: bool) {
    g.sub = "S5";
    let id = |s: &str| format!("{p}S5{s}");
    g.yn(&id(""), "FP2.7.1", "calibration only on request", &id(".u"), RETURN);
    let u3 = if image_level { id(".DG5.3") } else { id(".bs") };
    g.q(
        &id(".u"),
        "FP2.7.2",
        "comparative calibration use case",
        vec![opt("U1", &id(".DG5.2")), opt("U2", &id(".u2")), opt("U3", &u3), opt("none", &id(".interp"))],
    );
    let interp = id(".interp");
    let kde = || addp(Calibration, "ECE-KDE", json!({"p": 2}));
    let kce = || add(Calibration, "KCE");
    let cwce = || addp(Calibration, "CWCE", json!({"bins": 10}));
    g.guide(
        &id(".DG5.2"),
        "re-calibration methods on one classifier",
        guide(
            "DG5.2",
            "Brier Score versus KCE versus ECE-KDE",
            "",
            vec![
                option("BS", "Brier Score", &["proper scoring rule", "fixed classifier keeps discrimination constant"], &["mixes in refinement"], vec![add(Calibration, "BS")]),
                option("KCE", "Kernel Calibration Error", &["unbiased estimator"], &["hard to interpret"], vec![kce()]),
                option("ECE-KDE", "Kernel-density calibration error", &["interpretable lp error"], &["bandwidth-dependent"], vec![kde()]),
            ],
        ),
        Some(&interp),
    );
    g.yn(&id(".u2"), "FP2.5.1", "unequal interest favours a class-wise estimator", &id(".u2.cwce"), &id(".DG5.1"));
    g.act(&id(".u2.cwce"), "class-wise calibration", vec![cwce()], Some(&interp));
    g.guide(
        &id(".DG5.1"),
        "classifiers on one task",
        guide(
            "DG5.1",
            "KCE versus ECE-KDE",
            "",
            vec![
                option("KCE", "Kernel Calibration Error", &["unbiased", "supports testing"], &["hard to interpret"], vec![kce()]),
                option("ECE-KDE", "Kernel-density calibration error", &["interpretable lp error"], &["biased at small n"], vec![kde()]),
            ],
        ),
        Some(&interp),
    );
    let psr = |i: &str| {
        guide(
            "DG5.3",
            "Brier Score versus NLL",
            i,
            vec![
                option("BS", "Brier Score", &["bounded", "moderate penalty for confident errors"], &["weaker penalty on tail probabilities"], vec![add(Calibration, "BS")]),
                option("NLL", "Negative Log Likelihood", &["strong penalty on confident errors"], &["unbounded"], vec![add(Calibration, "NLL")]),
            ],
        )
    };
    if image_level {
        g.guide(&id(".DG5.3"), "overall performance comparison", psr(""), Some(&interp));
    } else {
        g.act(&id(".bs"), "proper score at object level", vec![add(Calibration, "BS")], Some(&interp));
    }
    let joint = if image_level { id(".interp.DG5.3") } else { id(".interp.bs") };
    g.q(
        &interp,
        "FP2.7.3",
        "interpretability of the scores",
        vec![opt("calibration-only", &id(".u4")), opt("joint-with-discrimination", &joint), opt("none", &id(".interp.none"))],
    );
    if image_level {
        g.guide(&joint, "joint assessment", psr("Joint assessment of calibration and discrimination."), None);
    } else {
        g.act(&joint, "joint assessment at object level", vec![add(Calibration, "BS")], None);
    }
    g.q(
        &id(".interp.none"),
        "FP2.7.2",
        "calibration requested but no use case chosen",
        vec![opt("U1", RETURN), opt("U2", RETURN), opt("U3", RETURN), opt("none", &id(".fallback"))],
    );
    g.act(
        &id(".fallback"),
        "no use case",
        vec![add(Calibration, "BS"), warn("calibration requested without a use case: reporting the Brier Score")],
        None,
    );
    g.yn(&id(".u4"), "FP2.5.1", "unequal interest favours a class-wise estimator", &id(".u4.cwce"), &id(".DG5.4"));
    g.act(&id(".u4.cwce"), "class-wise calibration", vec![cwce()], None);
    g.guide(
        &id(".DG5.4"),
        "calibration-only assessment",
        guide(
            "DG5.4",
            "Top-label versus class-wise versus canonical calibration",
            "Top-label calibration is the weakest notion.",
            vec![
                option(
                    "canonical",
                    "ECE-KDE with RBS upper bound and CWCE",
                    &["strongest calibration notion", "guaranteed upper bound"],
                    &["three numbers"],
                    vec![kde(), add(Calibration, "RBS"), cwce()],
                ),
                option("class-wise", "CWCE", &["per-class view"], &["ignores joint calibration"], vec![cwce()]),
                option(
                    "top-label",
                    "ECE with RBS",
                    &["familiar", "reliability diagram"],
                    &["only the top label is checked"],
                    vec![addp(Calibration, "ECE", json!({"bins": 10})), add(Calibration, "RBS")],
                ),
            ],
        ),
        None,
    );
}

fn s6(g: &mut G, p: &str) {
    g.sub = "S6";
    let id = |s: &str| format!("{p}S6{s}");
    g.yn(&id(""), "FP3.1", "small structures", &id(".noisy"), &id(".center"));
    g.yn(&id(".noisy"), "FP4.3.1", "small and noisy structures make overlap unreliable", &id(".skip"), &id(".small"));
    g.act(
        &id(".skip"),
        "no overlap metric",
        vec![warn("small structures with a noisy reference: overlap metrics are unreliable; relying on the boundary metric")],
        None,
    );
    g.act(
        &id(".small"),
        "small structures",
        vec![warn("small structures: single-pixel errors move overlap metrics strongly; consider object-level validation")],
        Some(&id(".center")),
    );
    g.yn(&id(".center"), "FP3.3", "tubular structures", &id(".cl"), &id(".centerline"));
    g.yn(&id(".centerline"), "FP2.3", "centerline interest", &id(".cl"), &id(".severity"));
    g.guide(
        &id(".cl"),
        "tubular structures or centerline interest",
        guide(
            "S6.centerline",
            "clDice alone or with DSC",
            "",
            vec![
                option("clDice", "clDice", &["topology-aware"], &["ignores thickness"], vec![add(Overlap, "clDice")]),
                option("clDice+DSC", "clDice and DSC", &["covers topology and volume overlap"], &["two numbers"], vec![add(Overlap, "clDice"), add(Overlap, "DSC")]),
            ],
        ),
        None,
    );
    g.yn(&id(".severity"), "FP2.5.2", "over- and undersegmentation weigh differently", &id(".fbeta"), &id(".DG6.1"));
    g.act(
        &id(".fbeta"),
        "pixel-level F-beta",
        vec![
            addp(Overlap, "F-beta", json!({"beta": 1.0})),
            warn("F-beta: set beta > 1 when undersegmentation is worse, beta < 1 when oversegmentation is worse"),
        ],
        None,
    );
    g.guide(
        &id(".DG6.1"),
        "standard overlap",
        guide(
            "DG6.1",
            "DSC versus IoU",
            "IoU = DSC / (2 - DSC): the rankings agree; pick by community convention.",
            vec![
                option("DSC", "Dice Similarity Coefficient", &["most common in medical imaging"], &[], vec![add(Overlap, "DSC")]),
                option("IoU", "Intersection over Union", &["common in computer vision"], &[], vec![add(Overlap, "IoU")]),
            ],
        ),
        None,
    );
}

fn s7(g: &mut G, p: &str) {
    g.sub = "S7";
    let id = |s: &str| format!("{p}S7{s}");
    let nsd = || addp(Boundary, "NSD", json!({"tau": 1.0}));
    g.yn(&id(""), "FP2.5.7", "tolerate annotation imprecision", &id(".nsd"), &id(".outliers"));
    g.act(
        &id(".nsd"),
        "tolerance-based boundary metric",
        vec![nsd(), warn("NSD: set tau to the tolerated annotation imprecision (spacing units)")],
        None,
    );
    g.yn(&id(".outliers"), "FP4.3.2", "spatial outliers in the reference", &id(".DG7.1"), &id(".penalty"));
    g.q(
        &id(".penalty"),
        "FP2.5.6",
        "how boundary errors are penalized",
        vec![opt("existence", &id(".DG7.1")), opt("distance-contour-focus", &id(".DG7.2")), opt("distance-outlier-focus", &id(".DG7.3"))],
    );
    g.guide(
        &id(".DG7.1"),
        "existence-based penalty",
        guide(
            "DG7.1",
            "NSD versus Boundary IoU",
            "",
            vec![
                option("NSD", "Normalized Surface Distance", &["explicit tolerance"], &["tau must be chosen"], vec![nsd()]),
                option(
                    "Boundary-IoU",
                    "Boundary IoU",
                    &["overlap on boundary bands"],
                    &["band width must be chosen"],
                    vec![addp(Boundary, "Boundary-IoU", json!({"width": crate::detection::DEFAULT_BOUNDARY_WIDTH}))],
                ),
            ],
        ),
        None,
    );
    g.guide(
        &id(".DG7.2"),
        "contour-focused distance",
        guide(
            "DG7.2",
            "MASD versus ASSD",
            "",
            vec![
                option("MASD", "Mean Average Surface Distance", &["both directions weigh equally"], &[], vec![add(Boundary, "MASD")]),
                option("ASSD", "Average Symmetric Surface Distance", &["weights by boundary size"], &["larger boundary dominates"], vec![add(Boundary, "ASSD")]),
            ],
        ),
        None,
    );
    g.guide(
        &id(".DG7.3"),
        "outlier-focused distance",
        guide(
            "DG7.3",
            "HD versus percentile HD",
            "",
            vec![
                option("HD", "Hausdorff Distance", &["worst-case error"], &["a single outlier dominates"], vec![add(Boundary, "HD")]),
                option(
                    "HD-percentile",
                    "95th percentile Hausdorff Distance",
                    &["robust to isolated outliers"],
                    &["percentile must be stated"],
                    vec![addp(Boundary, "HD-percentile", json!({"percentile": 95.0}))],
                ),
            ],
        ),
        None,
    );
}

fn aggregation(g: &mut G, p: &str, binary_max: u32) {
    g.sub = "aggregation";
    let id = |s: &str| format!("{p}AGG{s}");
    g.yn(&id(""), "FP4.5", "non-independent cases are aggregated hierarchically", &id(".hier"), &id(".classes"));
    let mut effects = vec![Effect::Hierarchy { keys: vec!["group".into()] }];
    if p != "ImLC." && p != "SemS." {
        effects.push(Effect::DetectionAggregation { mode: ApAggregation::PerImage });
    }
    g.act(&id(".hier"), "respect the data hierarchy", effects, Some(&id(".classes")));
    g.q(
        &id(".classes"),
        "class-count",
        "class aggregation only with several classes",
        vec![range(1, Some(binary_max), RETURN), range(binary_max + 1, None, &id(".interest"))],
    );
    let corr = || warn("several classes: correlations between classes are not corrected for");
    g.yn(&id(".interest"), "FP2.5.1", "unequal class interest", &id(".weighted"), &id(".compensate"));
    g.act(
        &id(".weighted"),
        "importance weights",
        vec![
            Effect::ClassAggregation { mode: ClassAggregation::Weighted },
            warn("weighted class aggregation: state class weights in the aggregation spec"),
            corr(),
        ],
        None,
    );
    g.yn(&id(".compensate"), "FP2.5.5", "imbalance compensation", &id(".macro"), &id(".prevalence"));
    g.act(&id(".macro"), "equal class weights", vec![Effect::ClassAggregation { mode: ClassAggregation::Macro }, corr()], None);
    g.act(
        &id(".prevalence"),
        "prevalence weights",
        vec![Effect::ClassAggregation { mode: ClassAggregation::PrevalenceWeighted }, corr()],
        None,
    );
}
