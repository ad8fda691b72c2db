use super::*;
use rayon::prelude::*;

use crate::model::ProblemCategory::{ImLC, InS, ObD, SemS};

fn ch(s: &str) -> Answer {
    Answer::Choice(s.into())
}

fn default_answer(item: &str) -> Answer {
    match item_spec(item).unwrap().domain {
        Domain::Bool => Answer::Flag(false),
        Domain::Count { min } => Answer::Count(min.max(2)),
        Domain::Choice { options } => ch(options[0]),
    }
}

/// Every relevant item answered with a neutral default, then overridden.
fn complete(c: ProblemCategory, overrides: &[(&str, Answer)]) -> Fingerprint {
    let g = DecisionGraph::standard();
    let mut fp = Fingerprint::for_category(c);
    for item in g.relevant_items(c) {
        if item != "FP1.1" {
            fp.set(&item, default_answer(&item)).unwrap();
        }
    }
    for (k, v) in overrides {
        fp.set(k, v.clone()).unwrap();
    }
    fp
}

fn choices(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

fn pool_with(fp: &Fingerprint, pairs: &[(&str, &str)]) -> MetricPool {
    recommend_with(DecisionGraph::standard(), fp, &choices(pairs)).unwrap().pool
}

fn pending_ids(p: &MetricPool) -> Vec<&str> {
    p.pending.iter().map(|g| g.id.as_str()).collect()
}

#[test]
fn standard_graph_is_valid() {
    let g = DecisionGraph::standard();
    g.validate().unwrap();
    let counts = g.subprocess_counts();
    for s in ["S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "S9"] {
        assert!(counts.get(s).copied().unwrap_or(0) > 0, "no nodes tagged {s}");
    }
}

#[test]
fn graph_json_round_trip() {
    let g = DecisionGraph::standard();
    let s = g.to_json();
    let back = DecisionGraph::from_json(&s).unwrap();
    assert_eq!(back.to_json(), s);
}

#[test]
fn validation_rejects_broken_graphs() {
    let g = DecisionGraph::standard();
    let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    let nodes = v["nodes"].as_array_mut().unwrap();
    let q = nodes.iter_mut().find(|n| n["id"] == "S2.severity").unwrap();
    q["arms"].as_array_mut().unwrap().pop();
    assert!(DecisionGraph::from_json(&v.to_string()).is_err(), "non-exhaustive arms accepted");

    let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    let nodes = v["nodes"].as_array_mut().unwrap();
    let a = nodes.iter_mut().find(|n| n["id"] == "S2.accuracy").unwrap();
    a["next"] = "S2".into();
    assert!(DecisionGraph::from_json(&v.to_string()).is_err(), "cycle accepted");

    let mut v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
    let nodes = v["nodes"].as_array_mut().unwrap();
    let a = nodes.iter_mut().find(|n| n["id"] == "S2.accuracy").unwrap();
    a["effects"][0]["metric"] = "Nope".into();
    assert!(DecisionGraph::from_json(&v.to_string()).is_err(), "unknown metric accepted");
}

#[test]
fn threshold_votes() {
    assert_eq!(resolve_overlap_thresholds(&[Vote::Lower]).0, vec![LOW_THRESHOLD]);
    assert_eq!(resolve_overlap_thresholds(&[Vote::Higher, Vote::Higher]).0, vec![HIGH_THRESHOLD]);
    let (grid, note) = resolve_overlap_thresholds(&[Vote::Lower, Vote::Higher]);
    assert_eq!(grid.len(), 9);
    assert!(note.is_some());
    assert!(resolve_overlap_thresholds(&[]).1.is_none());
}

#[test]
fn golden_dermoscopy_binary_classification() {
    let fp = complete(
        ImLC,
        &[
            ("class-count", 2.into()),
            ("FP5.1", true.into()),
            ("FP2.6", ch("target-value")),
            ("FP4.2", false.into()),
            ("FP2.7.1", true.into()),
            ("FP2.7.2", ch("U3")),
            ("FP2.7.3", ch("none")),
        ],
    );
    let p = recommend(&fp).unwrap();
    assert_eq!(p.category, ImLC);
    assert_eq!(pending_ids(&p), ["DG2.2", "DG3.1", "DG5.3"]);
    assert_eq!(p.metrics().into_iter().collect::<Vec<_>>(), ["AUROC"]);
    assert!(p.detection.is_none());
    assert_eq!(p.aggregation.class_aggregation, None);

    let p = pool_with(&fp, &[("DG2.2", "BA"), ("DG3.1", "Specificity@Sensitivity"), ("DG5.3", "BS")]);
    assert!(p.pending.is_empty());
    assert_eq!(p.metrics().into_iter().collect::<Vec<_>>(), ["AUROC", "BA", "BS", "Specificity"]);
    let s = p.entries.iter().find(|e| e.metric == "Specificity").unwrap();
    assert_eq!(s.params["target"], "Sensitivity");
    assert_eq!(s.params["target-value"], 0.95);
}

#[test]
fn golden_liver_ct_segmentation() {
    let fp = complete(SemS, &[("class-count", 2.into()), ("FP2.5.6", ch("distance-outlier-focus"))]);
    let p = recommend(&fp).unwrap();
    assert_eq!(pending_ids(&p), ["DG6.1", "DG7.3"]);
    assert!(p.entries.is_empty());
    assert_eq!(p.aggregation.class_aggregation, Some(ClassAggregation::PrevalenceWeighted));
    let p = pool_with(&fp, &[("DG6.1", "DSC"), ("DG7.3", "HD-percentile")]);
    assert_eq!(p.metrics().into_iter().collect::<Vec<_>>(), ["DSC", "HD-percentile"]);
    assert_eq!(p.section(Section::Boundary)[0].params["percentile"], 95.0);
}

#[test]
fn golden_ms_lesion_detection() {
    let fp = complete(
        ObD,
        &[
            ("class-count", 1.into()),
            ("FP5.1", true.into()),
            ("FP2.6", ch("argmax")),
            ("FP2.4", ch("overall-position")),
            ("FP4.4", ch("exact-outline")),
            ("FP3.1", true.into()),
            ("FP4.5", true.into()),
        ],
    );
    let p = recommend(&fp).unwrap();
    assert_eq!(pending_ids(&p), ["DG8.2", "DG4.2"]);
    assert_eq!(p.pending[0].options.len(), 3);
    let d = p.detection.as_ref().unwrap();
    assert_eq!(d.strategy, Some(StrategyKind::GreedyByScore));
    assert_eq!(d.thresholds, vec![LOW_THRESHOLD]);
    assert!(p.has("F-beta"));
    assert_eq!(p.aggregation.hierarchy, vec!["group".to_string()]);
    assert_eq!(p.aggregation.detection_aggregation, Some(ApAggregation::PerImage));

    let p = pool_with(&fp, &[("DG8.2", "mask-iou-gt-zero"), ("DG4.2", "FROC")]);
    let d = p.detection.as_ref().unwrap();
    assert_eq!(d.criterion, Some(CriterionKind::MaskIouGtZero));
    assert!(d.thresholds.is_empty());
    assert!(p.has("FROC"));

    let p = pool_with(&fp, &[("DG8.2", "center-distance"), ("DG4.2", "AP")]);
    assert_eq!(p.detection.unwrap().thresholds, vec![DEFAULT_CENTER_DISTANCE]);
}

#[test]
fn golden_instrument_instance_segmentation() {
    let fp = complete(
        InS,
        &[
            ("class-count", 3.into()),
            ("FP5.1", true.into()),
            ("FP2.6", ch("argmax")),
            ("FP3.5", true.into()),
            ("FP5.4", true.into()),
        ],
    );
    let p = recommend(&fp).unwrap();
    assert_eq!(pending_ids(&p), ["DG8.1", "DG3.6", "DG4.2", "DG6.1", "DG7.1"]);
    let p = pool_with(
        &fp,
        &[("DG8.1", "mask-iou"), ("DG3.6", "PQ"), ("DG4.2", "AP"), ("DG6.1", "DSC"), ("DG7.1", "NSD")],
    );
    let d = p.detection.as_ref().unwrap();
    assert_eq!(d.criterion, Some(CriterionKind::MaskIou));
    assert_eq!(d.thresholds, vec![HIGH_THRESHOLD]);
    assert!(!d.allow_merges);
    assert_eq!(p.metrics().into_iter().collect::<Vec<_>>(), ["AP", "DSC", "NSD", "PQ"]);
    assert_eq!(p.aggregation.class_aggregation, Some(ClassAggregation::PrevalenceWeighted));
    assert!(p.warnings.iter().any(|w| w.contains("correlations")));

    let p = pool_with(&fp, &[("DG8.1", "ior")]);
    assert!(p.detection.unwrap().allow_merges);
}

#[test]
fn tubular_structures_get_centerline_guide() {
    let fp = complete(SemS, &[("FP3.3", true.into())]);
    let p = recommend(&fp).unwrap();
    let g = p.pending_guide("S6.centerline").unwrap();
    assert!(GuideSpec::option_metrics(&g.options[0]).contains(&"clDice"));
    assert!(p.pending_guide("DG6.1").is_none());
}

#[test]
fn annotation_imprecision_gives_nsd() {
    let fp = complete(SemS, &[("FP2.5.7", true.into())]);
    let p = recommend(&fp).unwrap();
    let b = p.section(Section::Boundary);
    assert_eq!(b.len(), 1);
    assert_eq!(b[0].metric, "NSD");
    assert!(p.warnings.iter().any(|w| w.starts_with("NSD")));
}

#[test]
fn scoreless_detection() {
    let fp = complete(ObD, &[("FP5.1", false.into())]);
    let p = recommend(&fp).unwrap();
    assert!(p.has("F-beta"));
    assert!(p.section(Section::MultiThreshold).is_empty());
    assert!(p.pending.iter().all(|g| !g.id.starts_with("DG4")));
    let dg91 = p.pending_guide("DG9.1").unwrap();
    assert_eq!(dg91.options.len(), 3);
    let fp = complete(ObD, &[("FP5.1", false.into()), ("FP5.4", true.into())]);
    let p = recommend(&fp).unwrap();
    assert!(p.pending_guide("DG9.1").unwrap().options.iter().all(|o| o.id != "overlap-gt-half"));
}

#[test]
fn severity_with_costs_gives_ec_and_wck() {
    let fp = complete(ImLC, &[("class-count", 4.into()), ("FP2.5.2", true.into()), ("FP2.5.4", true.into()), ("FP2.6", ch("argmax"))]);
    let p = recommend(&fp).unwrap();
    let g = p.pending_guide("DG2.1").unwrap();
    let ids: Vec<_> = g.options.iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids, ["EC", "WCK"]);
    let p = pool_with(&fp, &[("DG2.1", "WCK")]);
    assert_eq!(p.section(Section::MultiClass)[0].metric, "WCK");
}

#[test]
fn too_few_classes_fail() {
    let fp = Fingerprint::for_category(ImLC);
    assert!(matches!(fp.clone().with("class-count", 1u32), Err(Error::Schema(_))));
    // The graph rejects it even when fingerprint validation is bypassed.
    let mut session = Session::new();
    let g = DecisionGraph::standard();
    session.answer(g, "S1.1", true.into()).unwrap();
    assert!(session.answer(g, "class-count", 1.into()).is_err());
}

#[test]
fn calibration_is_gated() {
    for c in ProblemCategory::ALL {
        let fp = complete(c, &[("FP5.1", true.into()), ("FP2.7.1", false.into()), ("FP2.7.2", ch("U1"))]);
        let p = recommend(&fp).unwrap();
        assert!(p.section(Section::Calibration).is_empty());
        assert!(p.pending.iter().all(|g| !g.id.starts_with("DG5")), "{c}");
    }
    let fp = complete(SemS, &[("FP2.7.1", true.into())]);
    assert!(recommend(&fp).unwrap().section(Section::Calibration).is_empty());
    let fp = complete(ObD, &[("FP5.1", false.into()), ("FP2.7.1", true.into())]);
    assert!(recommend(&fp).unwrap().section(Section::Calibration).is_empty());
}

#[test]
fn nll_only_for_image_level() {
    let fp = complete(ObD, &[("FP5.1", true.into()), ("FP2.7.1", true.into()), ("FP2.7.2", ch("U3"))]);
    let p = recommend(&fp).unwrap();
    assert!(p.has("BS"));
    assert!(p.pending_guide("DG5.3").is_none());
}

#[test]
fn calibration_fallback_without_use_case() {
    let fp = complete(ImLC, &[("FP5.1", true.into()), ("FP2.7.1", true.into()), ("FP2.7.2", ch("none")), ("FP2.7.3", ch("none"))]);
    let p = recommend(&fp).unwrap();
    assert!(p.has("BS"));
}

#[test]
fn missing_items_are_reported() {
    let fp = Fingerprint::for_category(SemS);
    match recommend(&fp) {
        Err(Error::MissingItems(m)) => {
            assert!(m.contains(&"class-count".to_string()));
            assert!(m.contains(&"FP2.5.6".to_string()));
        }
        other => panic!("{other:?}"),
    }
    // Items off the taken path are not demanded.
    let fp = complete(SemS, &[("FP2.5.7", true.into())]);
    let mut partial = fp.clone();
    partial.unset("FP2.5.6");
    partial.unset("FP4.3.2");
    assert_eq!(recommend(&partial).unwrap(), recommend(&fp).unwrap());
}

#[test]
fn unconsulted_items_do_not_change_the_pool() {
    let g = DecisionGraph::standard();
    for c in ProblemCategory::ALL {
        let fp = complete(c, &[]);
        let rec = recommend_with(g, &fp, &BTreeMap::new()).unwrap();
        let mut extra = fp.clone();
        for spec in crate::model::ITEMS {
            if !rec.consulted.iter().any(|x| x == spec.key) && spec.key != "S1.1" && spec.key != "S1.2" {
                extra.set(spec.key, default_answer(spec.key)).unwrap();
                let flipped = match default_answer(spec.key) {
                    Answer::Flag(b) => Answer::Flag(!b),
                    a => a,
                };
                extra.set(spec.key, flipped).unwrap();
            }
        }
        assert_eq!(recommend_with(g, &extra, &BTreeMap::new()).unwrap().pool, rec.pool, "{c}");
    }
}

#[test]
fn per_class_overrides() {
    let mut fp = complete(SemS, &[("class-count", 2.into())]);
    fp.set_class_override("vessel", "FP3.3", true.into()).unwrap();
    fp.set_class_override("liver", "FP3.3", false.into()).unwrap();
    let p = pool_with(&fp, &[("DG6.1", "DSC"), ("S6.centerline", "clDice"), ("DG7.1", "NSD")]);
    assert_eq!(p.per_class["vessel"].iter().find(|e| e.section == Section::Overlap).unwrap().metric, "clDice");
    assert!(!p.per_class.contains_key("liver"));
}

#[test]
fn recommendation_is_deterministic() {
    let fp = complete(InS, &[("FP5.1", true.into()), ("FP2.7.1", true.into()), ("FP2.7.2", ch("U1"))]);
    let a = recommend(&fp).unwrap().to_json();
    let b = recommend(&fp).unwrap().to_json();
    assert_eq!(a, b);
    assert_eq!(MetricPool::from_json(&a).unwrap().to_json(), a);
}

#[test]
fn unknown_guide_option_is_rejected() {
    let fp = complete(SemS, &[]);
    let r = recommend_with(DecisionGraph::standard(), &fp, &choices(&[("DG6.1", "HD")]));
    assert!(matches!(r, Err(Error::Invalid(_))));
}

// ---------------------------------------------------------------- sessions

#[test]
fn session_derives_category_and_enforces_frontier() {
    let g = DecisionGraph::standard();
    let mut s = Session::new();
    let q = s.next_question(g).unwrap().unwrap();
    assert_eq!(q.item, "S1.1");
    assert!(q.accepts.contains(&"FP1.1".to_string()));
    assert!(matches!(s.answer(g, "FP3.3", true.into()), Err(Error::OutOfFrontier(_))));
    s.answer(g, "S1.1", false.into()).unwrap();
    s.answer(g, "S1.2", true.into()).unwrap();
    s.answer(g, "FP2.1", true.into()).unwrap();
    assert_eq!(s.fingerprint().category(), Some(InS));
    assert_eq!(s.next_question(g).unwrap().unwrap().item, "class-count");
    assert!(matches!(s.guide(g, "DG8.1", "ior"), Err(Error::OutOfFrontier(_))));
    assert!(matches!(s.answer(g, "class-count", ch("x")), Err(Error::Schema(_))));
}

#[test]
fn session_walk_matches_direct_recommendation() {
    let g = DecisionGraph::standard();
    let target = complete(
        ObD,
        &[("FP5.1", true.into()), ("FP2.6", ch("target-value")), ("FP2.7.1", true.into()), ("FP2.7.2", ch("U2"))],
    );
    let mut s = Session::with_fingerprint(Fingerprint::for_category(ObD));
    while let Some(q) = s.next_question(g).unwrap() {
        s.answer(g, &q.item, target.get(&q.item).unwrap().clone()).unwrap();
        for pg in s.pending_guides(g).unwrap() {
            if !s.choices().contains_key(&pg.id) {
                let first = pg.options[0].id.clone();
                s.guide(g, &pg.id, &first).unwrap();
            }
        }
    }
    let got = s.pool(g).unwrap().pool;
    assert!(got.pending.is_empty());
    let direct = recommend_with(g, &target, s.choices()).unwrap().pool;
    assert_eq!(got, direct);

    let mut replayed = Session::with_fingerprint(Fingerprint::for_category(ObD));
    for e in s.transcript() {
        match e {
            TranscriptEntry::Answer { item, value } => replayed.answer(g, item, value.clone()).unwrap(),
            TranscriptEntry::Guide { guide, option } => replayed.guide(g, guide, option).unwrap(),
        }
    }
    assert_eq!(replayed.pool(g).unwrap(), s.pool(g).unwrap());
    let json = serde_json::to_string(s.transcript()).unwrap();
    let back: Vec<TranscriptEntry> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s.transcript());
}

#[test]
fn replay_from_scratch() {
    let g = DecisionGraph::standard();
    let t = vec![
        TranscriptEntry::Answer { item: "FP1.1".into(), value: ch("SemS") },
        TranscriptEntry::Answer { item: "class-count".into(), value: 1.into() },
        TranscriptEntry::Answer { item: "FP3.1".into(), value: false.into() },
    ];
    let s = Session::replay(g, &t).unwrap();
    assert_eq!(s.fingerprint().class_count(), Some(1));
    assert_eq!(s.next_question(g).unwrap().unwrap().item, "FP3.3");
}

// ---------------------------------------------------------------- exhaustive

fn graph_metrics(g: &DecisionGraph) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in &g.nodes {
        let effects: Vec<&Effect> = match &n.kind {
            NodeKind::Action { effects, .. } => effects.iter().collect(),
            NodeKind::Guide { guide, .. } => guide.options.iter().flat_map(|o| &o.effects).collect(),
            _ => vec![],
        };
        for e in effects {
            if let Effect::Add { metric, params, .. } = e {
                out.insert(metric.clone());
                if let Some(t) = params.get("target").and_then(|t| t.as_str()) {
                    out.insert(t.to_string());
                }
            }
        }
    }
    out
}

#[test]
fn every_catalog_metric_is_reachable_from_the_graph() {
    let reached = graph_metrics(DecisionGraph::standard());
    for m in catalog::METRICS {
        assert!(reached.contains(m.id), "{} never recommended", m.id);
    }
}

/// Every combination of binary items per category; enum items rotate.
#[test]
fn exhaustive_fingerprints_yield_nonempty_pools() {
    let g = DecisionGraph::standard();
    let started = std::time::Instant::now();
    let seen: BTreeSet<String> = ProblemCategory::ALL
        .par_iter()
        .flat_map(|&c| {
            let items: Vec<String> = g.relevant_items(c).into_iter().filter(|i| i != "FP1.1").collect();
            let bools: Vec<String> = items.iter().filter(|i| item_spec(i).unwrap().domain == Domain::Bool).cloned().collect();
            let others: Vec<String> = items.iter().filter(|i| item_spec(i).unwrap().domain != Domain::Bool).cloned().collect();
            let n = 1usize << bools.len();
            (0..n).into_par_iter().map(move |mask| {
                let mut fp = Fingerprint::for_category(c);
                for (j, b) in bools.iter().enumerate() {
                    fp.set(b, Answer::Flag(mask >> j & 1 == 1)).unwrap();
                }
                for (j, o) in others.iter().enumerate() {
                    let a = match item_spec(o).unwrap().domain {
                        Domain::Choice { options } => ch(options[(mask + j) % options.len()]),
                        _ => Answer::Count(c.min_classes() + (mask % 2) as u32),
                    };
                    fp.set(o, a).unwrap();
                }
                let p = recommend_with(g, &fp, &BTreeMap::new()).unwrap_or_else(|e| panic!("{c} {mask}: {e}")).pool;
                assert!(p.is_nonempty(), "{c} {mask}: empty pool");
                assert_eq!(p.category, c);
                assert_eq!(p.detection.is_some(), c.is_object_level());
                let mut out: BTreeSet<String> = p.metrics().into_iter().map(String::from).collect();
                for gs in &p.pending {
                    for o in &gs.options {
                        out.extend(GuideSpec::option_metrics(o).into_iter().map(String::from));
                    }
                }
                if mask % 5 == 0 {
                    let pick: BTreeMap<String, String> = p.pending.iter().map(|gs| (gs.id.clone(), gs.options[mask % gs.options.len()].id.clone())).collect();
                    let q = recommend_with(g, &fp, &pick).unwrap().pool;
                    assert!(q.pending.is_empty() && !q.entries.is_empty(), "{c} {mask}: unresolved after choosing");
                }
                if c == ObD || c == InS {
                    assert!(p.detection.as_ref().unwrap().strategy.is_some() || p.pending_guide("DG9.1").is_some());
                }
                out
            })
        })
        .flatten_iter()
        .collect();
    // Unanswered enum items block traversal.
    for c in ProblemCategory::ALL {
        let fp = Fingerprint::for_category(c).with("class-count", c.min_classes()).unwrap();
        assert!(matches!(recommend(&fp), Err(Error::MissingItems(_))));
    }
    let all = graph_metrics(g);
    let targets = ["NPV"];
    for m in &all {
        assert!(seen.contains(m) || targets.contains(&m.as_str()), "{m} unreachable by enumeration");
    }
    assert!(started.elapsed().as_secs() < 30, "enumeration took {:?}", started.elapsed());
}
