//! Acceptance checks. One PASS/FAIL line per criterion; exits nonzero on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use valmetric::aggregation::{aggregate, AggregationSpec, CaseValue, NanHandling};
use valmetric::boundary::{boundary_iou, boundary_of_mask, hausdorff, masd, nsd, assd, BoundarySet};
use valmetric::calibration::{brier_score, cwce, ece_binned, ece_kde, kce, nll, root_brier_score, BinningScheme, CwceWeighting};
use valmetric::counting::{
    accuracy, balanced_accuracy, dsc, error_rate, expected_cost, f_beta, informedness, iou, mcc, prevalences, CostMatrix,
};
use valmetric::detection::{
    assign, hungarian_max, nan_policy, panoptic_quality, AssignmentStrategy, CriterionKind, LocalizationCriterion,
    PolicyValues, StrategyKind,
};
use valmetric::model::{
    item_spec, Answer, BinaryCounts, ConfusionMatrix, Domain, Fingerprint, Instance, LabelMap, Location, ProblemCategory,
    ScoredSample, Value,
};
use valmetric::recommend::{recommend, recommend_with, DecisionGraph, GuideSpec, MetricPool, Section};
use valmetric::threshold::{auroc_scores, detection_ap, froc_score, ApAggregation, ImageDetections};

// Tolerances and budgets.
const TOL_BA: f64 = 0.005;
const TOL_MCC: f64 = 0.01;
const TOL_ECN_EFFECT1: f64 = 0.02;
const TOL_ECN_EFFECT3: f64 = 0.1;
const TOL_F1: f64 = 0.001;
const TOL_IDENTITY: f64 = 1e-12;
const TOL_AUROC: f64 = 1e-12;
const TOL_DISTANCE: f64 = 1e-9;
const CAL_MAX_ERROR: f64 = 0.05;
const KCE_STANDARD_ERRORS: f64 = 2.0;
const RBS_SLACK: f64 = 1e-6;
const TOL_BS_POINTS: f64 = 0.5;
const TOL_NLL_POINTS: f64 = 30.0;
const FAST: Duration = Duration::from_secs(1);
const CALIBRATION_BUDGET: Duration = Duration::from_secs(120);
const ENUMERATION_BUDGET: Duration = Duration::from_secs(30);

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want} ± {tol}"))
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let t = Instant::now();
    let detail = f()?;
    let dt = t.elapsed();
    ensure(dt < budget, || format!("took {dt:?}, budget {budget:?}"))?;
    Ok(format!("{detail} [{:.2?}]", dt))
}

// ---------------------------------------------------------------- counting

fn dg23(tp: u64, fn_: u64, fp: u64, tn: u64) -> (BinaryCounts, ConfusionMatrix) {
    let c = BinaryCounts::new(tp, fp, fn_, tn);
    (c, ConfusionMatrix::from_binary(c))
}

fn dg23_effect1() -> Outcome {
    timed(FAST, || {
        let (_, cm) = dg23(100, 1, 100, 10000);
        let ba = balanced_accuracy(&cm).map_err(|e| e.to_string())?;
        let m = mcc(&cm).map_err(|e| e.to_string())?;
        let ecn = expected_cost(&cm, &CostMatrix::zero_one(2), true).map_err(|e| e.to_string())?;
        near("BA", ba, 0.99, TOL_BA)?;
        near("MCC", m, 0.70, TOL_MCC)?;
        near("ECN", ecn, 1.00, TOL_ECN_EFFECT1)?;
        Ok(format!("BA={ba:.4} MCC={m:.4} ECN={ecn:.4}"))
    })
}

fn dg23_effect3() -> Outcome {
    timed(FAST, || {
        let (c, cm) = dg23(10, 1, 100, 10000);
        let ba = balanced_accuracy(&cm).map_err(|e| e.to_string())?;
        let m = mcc(&cm).map_err(|e| e.to_string())?;
        let ecn = expected_cost(&cm, &CostMatrix::zero_one(2), true).map_err(|e| e.to_string())?;
        let f_pos = f_beta(&c, 1.0).map_err(|e| e.to_string())?;
        let f_neg = f_beta(&c.swapped(), 1.0).map_err(|e| e.to_string())?;
        near("BA", ba, 0.95, TOL_BA)?;
        near("MCC", m, 0.29, TOL_MCC)?;
        near("ECN", ecn, 9.2, TOL_ECN_EFFECT3)?;
        near("F1(positive)", f_pos, 0.165, TOL_F1)?;
        near("F1(negative)", f_neg, 0.995, TOL_F1)?;
        Ok(format!("BA={ba:.4} MCC={m:.4} ECN={ecn:.3} F1=({f_pos:.4}, {f_neg:.4})"))
    })
}

fn random_matrix(r: &mut impl Rng, c: usize) -> ConfusionMatrix {
    // every row nonempty so priors and row rates are defined
    let rows = (0..c).map(|_| (0..c).map(|_| r.random_range(0..40u64)).collect::<Vec<_>>()).map(|mut row| {
        row[0] += 1;
        row
    });
    ConfusionMatrix::new(rows.collect(), None).unwrap()
}

fn identity_suite() -> Outcome {
    let mut r = common::rng(11);
    let mut worst: f64 = 0.0;
    for k in 0..500 {
        let bin = random_matrix(&mut r, 2);
        let mut c = bin.binary(1).map_err(|e| e.to_string())?;
        if c.tp + c.fp + c.fn_ == 0 {
            c.tp = 1;
        }
        let cmb = ConfusionMatrix::from_binary(c);
        let multi = random_matrix(&mut r, 2 + k % 4);
        let diffs = [
            accuracy(&multi).unwrap() - (1.0 - error_rate(&multi).unwrap()),
            dsc(&c).unwrap() - 2.0 * iou(&c).unwrap() / (1.0 + iou(&c).unwrap()),
            balanced_accuracy(&cmb).unwrap() - (informedness(&c).unwrap() + 1.0) / 2.0,
            expected_cost(&multi, &CostMatrix::zero_one(multi.n_classes()), false).unwrap() - (1.0 - accuracy(&multi).unwrap()),
            expected_cost(&multi, &CostMatrix::balanced(&prevalences(&multi).unwrap()).unwrap(), false).unwrap()
                - (1.0 - balanced_accuracy(&multi).unwrap()),
        ];
        for d in diffs {
            worst = worst.max(d.abs());
        }
    }
    ensure(worst <= TOL_IDENTITY, || format!("largest identity residual {worst:e}"))?;
    Ok(format!("500 matrices, largest residual {worst:.1e}"))
}

// ---------------------------------------------------------------- curves

fn pairwise_auroc(items: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = items.iter().filter(|i| i.1).map(|i| i.0).collect();
    let neg: Vec<f64> = items.iter().filter(|i| !i.1).map(|i| i.0).collect();
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

fn auroc_oracle() -> Outcome {
    let mut r = common::rng(12);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 200 {
        // coarse scores force ties
        let items: Vec<(f64, bool)> = (0..30).map(|_| (r.random_range(0..12) as f64 / 11.0, r.random_bool(0.4))).collect();
        if items.iter().all(|i| i.1) || items.iter().all(|i| !i.1) {
            continue;
        }
        let a = auroc_scores(&items).map_err(|e| e.to_string())?;
        worst = worst.max((a - pairwise_auroc(&items)).abs());
        done += 1;
    }
    ensure(worst <= TOL_AUROC, || format!("largest deviation {worst:e}"))?;
    Ok(format!("200 sets, largest deviation {worst:.1e}"))
}

fn froc_vs_ap() -> Outcome {
    let images = vec![
        ImageDetections { detections: vec![(0.95, true), (0.9, false), (0.6, true)], n_references: 3 },
        ImageDetections { detections: vec![(0.85, true), (0.7, false), (0.4, false)], n_references: 1 },
        ImageDetections { detections: vec![(0.8, false), (0.5, true)], n_references: 2 },
    ];
    let mut padded = images.clone();
    padded.extend(std::iter::repeat_n(ImageDetections::default(), 5));
    let grid = valmetric::counting::FPPI_GRID;
    let (f0, f1) = (froc_score(&images, &grid).unwrap(), froc_score(&padded, &grid).unwrap());
    let (a0, a1) = (
        detection_ap(&images, ApAggregation::PerDataset).unwrap(),
        detection_ap(&padded, ApAggregation::PerDataset).unwrap(),
    );
    ensure(f1 > f0, || format!("FROC {f0} -> {f1} did not increase"))?;
    ensure(a0 == a1, || format!("AP changed {a0} -> {a1}"))?;
    Ok(format!("FROC {f0:.4} -> {f1:.4}, AP {a0:.4} unchanged"))
}

// ---------------------------------------------------------------- matching

fn brute_max(w: &[Vec<f64>]) -> f64 {
    fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = go(w, row + 1, used);
        for j in 0..used.len() {
            if !used[j] && w[row][j] > 0.0 {
                used[j] = true;
                best = best.max(w[row][j] + go(w, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; w.first().map_or(0, |r| r.len())])
}

fn hungarian_optimality() -> Outcome {
    let mut r = common::rng(13);
    for k in 0..500 {
        let (rows, cols) = (r.random_range(1..=6), r.random_range(1..=6));
        // dyadic weights, about a third non-passing, so sums are exact
        let w: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| if r.random_bool(0.33) { 0.0 } else { r.random_range(1..=256) as f64 / 256.0 }).collect())
            .collect();
        let (assignment, total) = hungarian_max(&w);
        let want = brute_max(&w);
        ensure(total == want, || format!("matrix {k}: Hungarian {total}, exhaustive {want}"))?;
        let mut seen = vec![false; cols];
        for j in assignment.into_iter().flatten() {
            ensure(!seen[j], || format!("matrix {k}: column {j} used twice"))?;
            seen[j] = true;
        }
    }
    Ok("500 matrices up to 6x6 match the exhaustive maximum exactly".into())
}

fn nan_policy_table() -> Outcome {
    let scenarios = [
        (BinaryCounts::new(0, 0, 0, 0), PolicyValues { sensitivity: None, ppv: Some(1.0), f1: Some(1.0) }),
        (BinaryCounts::new(0, 2, 0, 0), PolicyValues { sensitivity: None, ppv: Some(0.0), f1: Some(0.0) }),
        (BinaryCounts::new(0, 0, 2, 0), PolicyValues { sensitivity: Some(0.0), ppv: None, f1: None }),
    ];
    for (c, want) in scenarios {
        let got = nan_policy(&c);
        ensure(got == want, || format!("{c:?}: got {got:?}, expected {want:?}"))?;
    }
    Ok("three empty-image scenarios match".into())
}

fn mask_instance(shape: &[usize], cells: impl IntoIterator<Item = (usize, usize)>) -> Instance {
    let mut m = vec![false; shape[0] * shape[1]];
    for (y, x) in cells {
        m[y * shape[1] + x] = true;
    }
    Instance::new(1, Location::Mask(LabelMap::from_mask(shape.to_vec(), &m, None).unwrap()))
}

fn row(y: usize, x0: usize, len: usize) -> Vec<(usize, usize)> {
    (x0..x0 + len).map(|x| (y, x)).collect()
}

fn pq_of(preds: &[Instance], refs: &[Instance]) -> Result<valmetric::detection::PanopticQuality, String> {
    let crit = LocalizationCriterion::new(CriterionKind::MaskIou, Some(0.5)).map_err(|e| e.to_string())?;
    let m = assign(preds, refs, &crit, &AssignmentStrategy::new(StrategyKind::Hungarian, false)).map_err(|e| e.to_string())?;
    Ok(panoptic_quality(&m))
}

fn pq_claims() -> Outcome {
    let shape = [8, 20];
    let refs = vec![mask_instance(&shape, row(1, 0, 10)), mask_instance(&shape, row(4, 0, 10)), mask_instance(&shape, row(6, 0, 10))];
    // perfect overlap on two references, one miss, one false positive
    let preds = vec![mask_instance(&shape, row(1, 0, 10)), mask_instance(&shape, row(4, 0, 10)), mask_instance(&shape, row(7, 12, 5))];
    let q = pq_of(&preds, &refs)?;
    let f1 = 2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 1.0);
    ensure(q.pq == f1, || format!("PQ {} differs from F1 {f1} at mean IoU 1", q.pq))?;

    // prediction 1: IoU 0.9 on both references plus two false positives
    let refs2 = vec![mask_instance(&shape, row(1, 0, 10)), mask_instance(&shape, row(4, 0, 10))];
    let p1 = vec![
        mask_instance(&shape, row(1, 0, 9)),
        mask_instance(&shape, row(4, 0, 9)),
        mask_instance(&shape, row(6, 12, 3)),
        mask_instance(&shape, row(7, 12, 3)),
    ];
    // prediction 2: IoU 0.6 on both references, nothing else
    let p2 = vec![mask_instance(&shape, row(1, 0, 6)), mask_instance(&shape, row(4, 0, 6))];
    let (q1, q2) = (pq_of(&p1, &refs2)?, pq_of(&p2, &refs2)?);
    ensure((q1.pq - q2.pq).abs() < 1e-12, || format!("PQ {} vs {}", q1.pq, q2.pq))?;
    ensure(q1.sq > q2.sq && q1.dq < q2.dq, || format!("factor split not reproduced: {q1:?} {q2:?}"))?;
    Ok(format!("PQ=F1={f1:.4}; both predictions PQ={:.4} (SQ {:.2}/{:.2}, DQ {:.3}/{:.3})", q1.pq, q1.sq.unwrap(), q2.sq.unwrap(), q1.dq, q2.dq))
}

// ---------------------------------------------------------------- distances

fn brute_directed(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.iter()
        .map(|p| b.iter().map(|q| p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).fold(f64::INFINITY, f64::min))
        .collect()
}

fn lin_percentile(v: &[f64], p: f64) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

fn oracle_distances(a: &[Vec<f64>], b: &[Vec<f64>]) -> [f64; 4] {
    let (ab, ba) = (brute_directed(a, b), brute_directed(b, a));
    let pooled: Vec<f64> = ab.iter().chain(&ba).copied().collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    [pooled.iter().copied().fold(0.0, f64::max), lin_percentile(&pooled, 95.0), mean(&pooled), 0.5 * (mean(&ab) + mean(&ba))]
}

fn library_distances(a: &BoundarySet, b: &BoundarySet) -> Result<[f64; 4], String> {
    let e = |x: valmetric::Error| x.to_string();
    Ok([hausdorff(a, b, None).map_err(e)?, hausdorff(a, b, Some(95.0)).map_err(e)?, assd(a, b).map_err(e)?, masd(a, b, 0.5).map_err(e)?])
}

fn random_blob(r: &mut impl Rng, shape: &[usize]) -> Vec<bool> {
    let (h, w) = (shape[0], shape[1]);
    let (y0, x0) = (r.random_range(0..h - 2), r.random_range(0..w - 2));
    let (y1, x1) = (r.random_range(y0 + 1..h), r.random_range(x0 + 1..w));
    (0..h * w).map(|i| (y0..=y1).contains(&(i / w)) && (x0..=x1).contains(&(i % w)) && r.random_bool(0.85)).collect()
}

fn distance_oracle() -> Outcome {
    let mut r = common::rng(14);
    let mut worst: f64 = 0.0;
    let mut grid_sets = 0;
    while grid_sets < 100 {
        // grid path: exact distance transform with anisotropic spacing
        let shape = [12, 12];
        let spacing = [1.0, r.random_range(0.5..2.0)];
        let (ma, mb) = (random_blob(&mut r, &shape), random_blob(&mut r, &shape));
        let (a, b) = (boundary_of_mask(&shape, &spacing, &ma), boundary_of_mask(&shape, &spacing, &mb));
        if a.is_empty() || b.is_empty() || a.len() > 50 || b.len() > 50 {
            continue;
        }
        let lib = library_distances(&a, &b)?;
        let want = oracle_distances(&a.points, &b.points);
        for k in 0..4 {
            worst = worst.max((lib[k] - want[k]).abs());
        }
        ensure(lib[0] >= lib[1], || format!("HD {} < HD95 {}", lib[0], lib[1]))?;
        grid_sets += 1;
    }
    for _ in 0..100 {
        // free point clouds
        let n = r.random_range(1..=50);
        let m = r.random_range(1..=50);
        let cloud = |r: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| vec![r.random_range(0.0..30.0), r.random_range(0.0..30.0), r.random_range(0.0..30.0)]).collect()
        };
        let (pa, pb) = (cloud(&mut r, n), cloud(&mut r, m));
        let lib = library_distances(&BoundarySet::from_points(pa.clone()), &BoundarySet::from_points(pb.clone()))?;
        let want = oracle_distances(&pa, &pb);
        for k in 0..4 {
            worst = worst.max((lib[k] - want[k]).abs());
        }
        ensure(lib[0] >= lib[1], || format!("HD {} < HD95 {}", lib[0], lib[1]))?;
    }
    ensure(worst <= TOL_DISTANCE, || format!("largest deviation {worst:e}"))?;

    let shape = [12, 12];
    let mask = random_blob(&mut r, &shape);
    let bs = boundary_of_mask(&shape, &[1.0, 1.0], &mask);
    let same = library_distances(&bs, &bs)?;
    ensure(same.iter().all(|&d| d == 0.0), || format!("identical masks gave {same:?}"))?;
    let n = nsd(&bs, &bs, 1.0).map_err(|e| e.to_string())?;
    let map = LabelMap::from_mask(shape.to_vec(), &mask, None).unwrap();
    let biou = boundary_iou(&map, &map, 2.0).map_err(|e| e.to_string())?;
    ensure(n == 1.0 && biou == 1.0, || format!("identical masks: NSD {n}, Boundary IoU {biou}"))?;
    Ok(format!("200 boundary pairs, largest deviation {worst:.1e}; identical masks give 0 / NSD 1 / Boundary IoU 1"))
}

// ---------------------------------------------------------------- calibration

struct CalRun {
    ece: f64,
    cwce: f64,
    kde: f64,
    kce: f64,
    rbs: f64,
}

fn cal_run(s: &[ScoredSample]) -> Result<CalRun, String> {
    let e = |x: valmetric::Error| x.to_string();
    let bins = BinningScheme::equal_width(10).map_err(e)?;
    Ok(CalRun {
        ece: ece_binned(s, &bins).map_err(e)?,
        cwce: cwce(s, &bins, &CwceWeighting::Uniform).map_err(e)?.value,
        kde: ece_kde(s, 2, None).map_err(e)?.0,
        kce: kce(s, None).map_err(e)?.0,
        rbs: root_brier_score(s).map_err(e)?,
    })
}

fn calibration_properties() -> Outcome {
    timed(CALIBRATION_BUDGET, || {
        let seeds: Vec<u64> = (100..110).collect();
        let runs: Vec<Result<(CalRun, CalRun), String>> = seeds
            .par_iter()
            .map(|&seed| Ok((cal_run(&common::calibrated(seed, 5000, 3))?, cal_run(&common::overconfident(seed, 5000, 3))?)))
            .collect();
        let runs: Vec<(CalRun, CalRun)> = runs.into_iter().collect::<Result<_, _>>()?;
        for (k, (cal, over)) in runs.iter().enumerate() {
            for (name, v) in [("ECE", cal.ece), ("CWCE", cal.cwce), ("ECE-KDE", cal.kde)] {
                ensure(v <= CAL_MAX_ERROR, || format!("seed {k}: calibrated {name} = {v}"))?;
            }
            for (name, a, b) in [("ECE", cal.ece, over.ece), ("CWCE", cal.cwce, over.cwce), ("ECE-KDE", cal.kde, over.kde), ("KCE", cal.kce, over.kce)] {
                ensure(b > a, || format!("seed {k}: {name} overconfident {b} not above calibrated {a}"))?;
            }
            for run in [cal, over] {
                ensure(run.rbs >= run.kde - RBS_SLACK, || format!("seed {k}: RBS {} below ECE-KDE {}", run.rbs, run.kde))?;
            }
        }
        let kces: Vec<f64> = runs.iter().map(|r| r.0.kce).collect();
        let n = kces.len() as f64;
        let mean = kces.iter().sum::<f64>() / n;
        let se = (kces.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt();
        ensure(mean.abs() <= KCE_STANDARD_ERRORS * se, || format!("calibrated KCE mean {mean:e} beyond {KCE_STANDARD_ERRORS} SE ({se:e})"))?;

        // single entry, true class 1: score 0.01 versus 0.001
        let entry = |p: f64| vec![ScoredSample::new(vec![1.0 - p, p], 1)];
        let bs = |p: f64| brier_score(&entry(p), true).unwrap();
        let nl = |p: f64| nll(&entry(p), 1e-12).unwrap();
        let bs_points = 100.0 * (bs(0.001) - bs(0.01));
        let nll_points = 100.0 * (nl(0.001) - nl(0.01));
        near("BS increase (points)", bs_points, 2.0, TOL_BS_POINTS)?;
        near("NLL increase (points)", nll_points, 230.0, TOL_NLL_POINTS)?;
        let worst_cal = runs.iter().map(|r| r.0.ece.max(r.0.cwce).max(r.0.kde)).fold(0.0, f64::max);
        Ok(format!(
            "10 seeds n=5000 C=3: max calibrated error {worst_cal:.4}, KCE mean {mean:.2e} (SE {se:.2e}); penalty +{bs_points:.2} BS / +{nll_points:.1} NLL points"
        ))
    })
}

// ---------------------------------------------------------------- recommendation

fn default_answer(item: &str, c: ProblemCategory) -> Answer {
    match item_spec(item).unwrap().domain {
        Domain::Bool => Answer::Flag(false),
        Domain::Count { min } => Answer::Count(min.max(c.min_classes()).max(2)),
        Domain::Choice { options } => Answer::Choice(options[0].into()),
    }
}

fn use_case(c: ProblemCategory, overrides: &[(&str, Answer)]) -> Fingerprint {
    let g = DecisionGraph::standard();
    let mut fp = Fingerprint::for_category(c);
    for item in g.relevant_items(c) {
        if item != "FP1.1" {
            fp.set(&item, default_answer(&item, c)).unwrap();
        }
    }
    for (k, v) in overrides {
        fp.set(k, v.clone()).unwrap();
    }
    fp
}

fn offered(p: &MetricPool) -> Vec<String> {
    let mut out: Vec<String> = p.metrics().into_iter().map(String::from).collect();
    for g in &p.pending {
        for o in &g.options {
            out.extend(GuideSpec::option_metrics(o).into_iter().map(String::from));
        }
    }
    out
}

fn golden(name: &str, f: impl FnOnce() -> Result<(), String>) -> Result<(), String> {
    f().map_err(|e| format!("{name}: {e}"))
}

fn recommendation_conformance() -> Outcome {
    use ProblemCategory::*;
    let err = |e: valmetric::Error| e.to_string();
    golden("dermoscopy_imlc2", || {
        let fp = use_case(ImLC, &[("FP5.1", true.into()), ("FP2.6", "target-value".into()), ("FP2.7.1", true.into()), ("FP2.7.2", "U3".into())]);
        let p = recommend(&fp).map_err(err)?;
        let o = offered(&p);
        ensure(o.iter().any(|m| m == "AUROC"), || format!("no AUROC in {o:?}"))?;
        ensure(p.pending_guide("DG2.2").is_some() || p.pending_guide("DG2.3").is_some(), || "no multi-class guide".into())?;
        ensure(p.pending_guide("DG5.3").is_some(), || "no calibration guide".into())
    })?;
    golden("liver_sems2", || {
        let fp = use_case(SemS, &[("FP2.5.6", "distance-outlier-focus".into())]);
        let p = recommend(&fp).map_err(err)?;
        let overlap = p.pending_guide("DG6.1").ok_or("no DSC/IoU choice")?;
        let ids: Vec<&str> = overlap.options.iter().map(|o| o.id.as_str()).collect();
        ensure(ids == ["DSC", "IoU"], || format!("DG6.1 options {ids:?}"))?;
        let boundary = p.pending_guide("DG7.3").ok_or("no boundary metric")?;
        ensure(boundary.options.iter().all(|o| GuideSpec::option_metrics(o).iter().all(|m| m.starts_with("HD"))), || "DG7.3 not HD".into())
    })?;
    golden("tubular_sems_cldice", || {
        let p = recommend(&use_case(SemS, &[("FP3.3", true.into())])).map_err(err)?;
        ensure(offered(&p).iter().any(|m| m == "clDice"), || "clDice not offered".into())
    })?;
    golden("imprecise_annotations_nsd", || {
        let p = recommend(&use_case(SemS, &[("FP2.5.7", true.into())])).map_err(err)?;
        let b: Vec<&str> = p.section(Section::Boundary).iter().map(|e| e.metric.as_str()).collect();
        ensure(b == ["NSD"], || format!("boundary section {b:?}"))
    })?;
    golden("scoreless_obd", || {
        let p = recommend(&use_case(ObD, &[("FP5.1", false.into())])).map_err(err)?;
        ensure(p.has("F-beta"), || "no F-beta".into())?;
        let o = offered(&p);
        ensure(!o.iter().any(|m| ["AP", "FROC", "AUROC"].contains(&m.as_str())), || format!("multi-threshold metric offered: {o:?}"))
    })?;
    golden("ms_lesion_obd2", || {
        let fp = use_case(ObD, &[("FP5.1", true.into()), ("FP2.6", "argmax".into()), ("FP4.4", "exact-outline".into()), ("FP3.1", true.into())]);
        let p = recommend(&fp).map_err(err)?;
        ensure(p.detection.is_some(), || "no detection config".into())?;
        ensure(p.pending_guide("DG4.2").is_some(), || "no AP/FROC choice".into())
    })?;
    golden("instruments_ins2_pq", || {
        let fp = use_case(InS, &[("class-count", 3.into()), ("FP5.1", true.into()), ("FP2.6", "argmax".into())]);
        let p = recommend(&fp).map_err(err)?;
        let g = p.pending_guide("DG3.6").ok_or("DG3.6 not offered")?;
        ensure(g.options.iter().any(|o| o.id == "PQ"), || "PQ not an option".into())
    })?;

    let g = DecisionGraph::standard();
    let t = Instant::now();
    let counts: Vec<Result<usize, String>> = ProblemCategory::ALL
        .par_iter()
        .map(|&c| {
            let items: Vec<String> = g.relevant_items(c).into_iter().filter(|i| i != "FP1.1").collect();
            let bools: Vec<&String> = items.iter().filter(|i| item_spec(i).unwrap().domain == Domain::Bool).collect();
            let others: Vec<&String> = items.iter().filter(|i| item_spec(i).unwrap().domain != Domain::Bool).collect();
            (0..1usize << bools.len())
                .into_par_iter()
                .map(|mask| {
                    let mut fp = Fingerprint::for_category(c);
                    for (j, b) in bools.iter().enumerate() {
                        fp.set(b, Answer::Flag(mask >> j & 1 == 1)).map_err(|e| e.to_string())?;
                    }
                    for (j, o) in others.iter().enumerate() {
                        let a = match item_spec(o).unwrap().domain {
                            Domain::Choice { options } => Answer::Choice(options[(mask + j) % options.len()].into()),
                            _ => Answer::Count(c.min_classes() + (mask % 2) as u32),
                        };
                        fp.set(o, a).map_err(|e| e.to_string())?;
                    }
                    let p = recommend_with(g, &fp, &BTreeMap::new()).map_err(|e| format!("{c} #{mask}: {e}"))?.pool;
                    ensure(p.is_nonempty(), || format!("{c} #{mask}: empty pool"))?;
                    Ok(1)
                })
                .sum::<Result<usize, String>>()
        })
        .collect();
    let mut total = 0;
    for c in counts {
        total += c?;
    }
    // incomplete fingerprints name what is missing
    for c in ProblemCategory::ALL {
        let fp = Fingerprint::for_category(c).with("class-count", c.min_classes().max(2)).map_err(err)?;
        match recommend(&fp) {
            Err(valmetric::Error::MissingItems(m)) if !m.is_empty() => {}
            other => return Err(format!("{c}: incomplete fingerprint gave {other:?}")),
        }
    }
    let dt = t.elapsed();
    ensure(dt < ENUMERATION_BUDGET, || format!("enumeration took {dt:?}"))?;
    Ok(format!("7 named golden cases; {total} enumerated fingerprints nonempty in {dt:.2?}"))
}

// ---------------------------------------------------------------- aggregation

fn aggregation_fixtures() -> Outcome {
    let err = |e: valmetric::Error| e.to_string();
    let cases = [CaseValue::num(0.8), CaseValue::new(Value::excluded("empty prediction"))];
    let excl = AggregationSpec { nan_handling: NanHandling::Exclude, ..Default::default() };
    let worst = AggregationSpec { nan_handling: NanHandling::WorstValue, ..Default::default() };
    let dsc_worst = valmetric::catalog::metric("DSC").and_then(|m| m.worst_value());
    let a = aggregate("DSC", &cases, &excl, dsc_worst, 0).map_err(err)?.value.num().unwrap_or(f64::NAN);
    let b = aggregate("DSC", &cases, &worst, dsc_worst, 0).map_err(err)?.value.num().unwrap_or(f64::NAN);
    near("exclude", a, 0.8, 1e-12)?;
    near("worst-value", b, 0.4, 1e-12)?;

    let patients = [CaseValue::num(1.0).in_group("p1"), CaseValue::num(1.0).in_group("p1"), CaseValue::num(0.0).in_group("p2")];
    let flat: Vec<CaseValue> = patients.iter().map(|c| CaseValue::new(c.value.clone())).collect();
    let hier = AggregationSpec { hierarchy: vec!["patient".into()], ..Default::default() };
    let h = aggregate("DSC", &patients, &hier, None, 0).map_err(err)?.value.num().unwrap_or(f64::NAN);
    let f = aggregate("DSC", &flat, &AggregationSpec::default(), None, 0).map_err(err)?.value.num().unwrap_or(f64::NAN);
    near("hierarchical", h, 0.5, 1e-12)?;
    near("flat", f, 2.0 / 3.0, 1e-12)?;
    Ok(format!("exclude {a} vs worst {b}; hierarchical {h} vs flat {f:.4}"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("multi-class metrics on the imbalanced screening matrix", dg23_effect1),
        ("multi-class and per-class metrics on the rare-positive matrix", dg23_effect3),
        ("metric identity suite", identity_suite),
        ("AUROC equals pairwise win rate", auroc_oracle),
        ("Hungarian assignment optimality", hungarian_optimality),
        ("empty-image NaN policy table", nan_policy_table),
        ("distance metrics against brute force", distance_oracle),
        ("panoptic quality claims", pq_claims),
        ("calibration estimator properties", calibration_properties),
        ("FROC versus AP with empty images", froc_vs_ap),
        ("recommendation conformance", recommendation_conformance),
        ("aggregation fixtures", aggregation_fixtures),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {e}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
