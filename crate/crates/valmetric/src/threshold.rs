//! Multi-threshold metrics: ROC/AUROC, PR/AP, FROC and target-value readouts.
//!
//! A case or detection is called positive when its score is ≥ the threshold.
//! Thresholds are the distinct observed scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::counting::{self, counts_at_threshold};
use crate::error::{Error, Result};
use crate::model::{check_samples, BinaryCounts, ScoredSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CurveKind {
    Roc,
    Pr,
    Froc,
}

/// Operating points in threshold order (descending threshold).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub thresholds: Vec<f64>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,threshold\n");
        for ((x, y), t) in self.points.iter().zip(&self.thresholds) {
            s.push_str(&format!("{x},{y},{t}\n"));
        }
        s
    }
}

/// (score, is-positive) pairs of one binary problem.
fn binary_view(samples: &[ScoredSample], positive: usize) -> Result<Vec<(f64, bool)>> {
    let c = check_samples(samples)?;
    if positive >= c {
        return Err(Error::invalid(format!("positive class {positive} outside {c} classes")));
    }
    Ok(samples.iter().map(|s| (s.scores[positive], s.reference == positive)).collect())
}

/// Cumulative (threshold, positives-so-far, negatives-so-far) per distinct score, descending.
fn sweep(items: &[(f64, bool)]) -> Vec<(f64, u64, u64)> {
    let mut sorted: Vec<(f64, bool)> = items.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(f64, u64, u64)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    for (i, &(s, pos)) in sorted.iter().enumerate() {
        if pos {
            tp += 1;
        } else {
            fp += 1;
        }
        if i + 1 == sorted.len() || sorted[i + 1].0 != s {
            out.push((s, tp, fp));
        }
    }
    out
}

fn roc_from_items(items: &[(f64, bool)]) -> Result<(Curve, u64, u64, Vec<(u64, u64)>)> {
    let p = items.iter().filter(|x| x.1).count() as u64;
    let n = items.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::undefined("ROC needs at least one positive and one negative"));
    }
    let mut counts = vec![(0u64, 0u64)];
    let mut thresholds = vec![f64::INFINITY];
    for (t, tp, fp) in sweep(items) {
        counts.push((tp, fp));
        thresholds.push(t);
    }
    let points = counts.iter().map(|&(tp, fp)| (fp as f64 / n as f64, tp as f64 / p as f64)).collect();
    Ok((Curve { kind: CurveKind::Roc, points, thresholds }, p, n, counts))
}

/// ROC curve (1 − Specificity, Sensitivity) from (0,0) to (1,1).
pub fn roc_curve(samples: &[ScoredSample], positive: usize) -> Result<Curve> {
    Ok(roc_from_items(&binary_view(samples, positive)?)?.0)
}

/// Trapezoidal area under the ROC curve; tied scores earn half credit.
pub fn auroc(samples: &[ScoredSample], positive: usize) -> Result<f64> {
    auroc_scores(&binary_view(samples, positive)?)
}

/// AUROC on raw (score, is-positive) pairs. Summed in integers so it equals the
/// pairwise win probability exactly up to one division.
pub fn auroc_scores(items: &[(f64, bool)]) -> Result<f64> {
    let (_, p, n, counts) = roc_from_items(items)?;
    let twice: u128 = counts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) as u128 * (w[0].0 + w[1].0) as u128)
        .sum();
    Ok(twice as f64 / (2.0 * p as f64 * n as f64))
}

/// Area under the monotone precision envelope, points given as (recall, precision).
fn envelope_area(points: &[(f64, f64)]) -> f64 {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for i in 0..pts.len() {
        let r = pts[i].0;
        if r > prev_r {
            let env = pts[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            area += (r - prev_r) * env;
            prev_r = r;
        }
    }
    area
}

/// Precision-recall curve as (recall, precision). `n_positive` may exceed the
/// positives among `items` (references never detected).
pub fn pr_curve_scores(items: &[(f64, bool)], n_positive: usize) -> Result<Curve> {
    if n_positive == 0 {
        return Err(Error::undefined("PR curve needs at least one positive"));
    }
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    for (t, tp, fp) in sweep(items) {
        points.push((tp as f64 / n_positive as f64, tp as f64 / (tp + fp) as f64));
        thresholds.push(t);
    }
    Ok(Curve { kind: CurveKind::Pr, points, thresholds })
}

/// All-point interpolated average precision on raw pairs.
pub fn average_precision_scores(items: &[(f64, bool)], n_positive: usize) -> Result<f64> {
    Ok(envelope_area(&pr_curve_scores(items, n_positive)?.points))
}

pub fn pr_curve(samples: &[ScoredSample], positive: usize) -> Result<Curve> {
    let items = binary_view(samples, positive)?;
    let p = items.iter().filter(|x| x.1).count();
    pr_curve_scores(&items, p)
}

/// All-point interpolated AP for one class of an image-level task.
pub fn average_precision(samples: &[ScoredSample], positive: usize) -> Result<f64> {
    Ok(envelope_area(&pr_curve(samples, positive)?.points))
}

/// Scored detections of one image after matching: (score, is-true-positive),
/// plus the number of reference objects in the image.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub detections: Vec<(f64, bool)>,
    #[serde(rename = "n-references")]
    pub n_references: usize,
}

impl ImageDetections {
    pub fn counts_at(&self, threshold: f64) -> BinaryCounts {
        let mut c = BinaryCounts::default();
        for &(s, tp) in &self.detections {
            if s >= threshold {
                if tp {
                    c.tp += 1;
                } else {
                    c.fp += 1;
                }
            }
        }
        c.fn_ = self.n_references as u64 - c.tp;
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApAggregation {
    PerDataset,
    PerImage,
}

fn distinct_thresholds(images: &[ImageDetections]) -> Vec<f64> {
    let mut t: Vec<f64> = images.iter().flat_map(|i| i.detections.iter().map(|d| d.0)).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn check_detections(images: &[ImageDetections]) -> Result<usize> {
    if images.is_empty() {
        return Err(Error::invalid("no images"));
    }
    for (k, im) in images.iter().enumerate() {
        if im.detections.iter().filter(|d| d.1).count() > im.n_references {
            return Err(Error::invalid(format!("image {k}: more true positives than references")));
        }
        if let Some(d) = im.detections.iter().find(|d| !d.0.is_finite()) {
            return Err(Error::invalid(format!("image {k}: non-finite score {}", d.0)));
        }
    }
    Ok(images.iter().map(|i| i.n_references).sum())
}

/// Detection AP. Per-dataset pools all detections; per-image averages the
/// per-image precision and recall at each global threshold (undefined
/// per-image values follow the empty-image policy) before integrating.
pub fn detection_ap(images: &[ImageDetections], mode: ApAggregation) -> Result<f64> {
    let total = check_detections(images)?;
    if total == 0 {
        return Err(Error::undefined("AP: no reference objects in the data set"));
    }
    match mode {
        ApAggregation::PerDataset => {
            let items: Vec<(f64, bool)> = images.iter().flat_map(|i| i.detections.iter().copied()).collect();
            average_precision_scores(&items, total)
        }
        ApAggregation::PerImage => {
            let mut points = Vec::new();
            for t in distinct_thresholds(images) {
                let mut rec = Vec::new();
                let mut prec = Vec::new();
                for im in images {
                    let v = crate::detection::nan_policy(&im.counts_at(t));
                    rec.extend(v.sensitivity);
                    prec.extend(v.ppv);
                }
                if rec.is_empty() || prec.is_empty() {
                    continue;
                }
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                points.push((mean(&rec), mean(&prec)));
            }
            Ok(envelope_area(&points))
        }
    }
}

/// FROC curve: (FP per image, data-set sensitivity), starting at (0, 0).
pub fn froc_curve(images: &[ImageDetections]) -> Result<Curve> {
    let total = check_detections(images)?;
    if total == 0 {
        return Err(Error::undefined("FROC: no reference objects in the data set"));
    }
    let n_img = images.len() as f64;
    let items: Vec<(f64, bool)> = images.iter().flat_map(|i| i.detections.iter().copied()).collect();
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    for (t, tp, fp) in sweep(&items) {
        points.push((fp as f64 / n_img, tp as f64 / total as f64));
        thresholds.push(t);
    }
    Ok(Curve { kind: CurveKind::Froc, points, thresholds })
}

/// Mean sensitivity at the given FPPI values. Each value reads the best
/// sensitivity among operating points whose FPPI does not exceed it.
pub fn froc_score(images: &[ImageDetections], fppi_grid: &[f64]) -> Result<f64> {
    if fppi_grid.is_empty() {
        return Err(Error::invalid("empty FPPI grid"));
    }
    let curve = froc_curve(images)?;
    let read = |g: f64| curve.points.iter().filter(|p| p.0 <= g).map(|p| p.1).fold(0.0, f64::max);
    Ok(fppi_grid.iter().map(|&g| read(g)).sum::<f64>() / fppi_grid.len() as f64)
}

/// Metrics that can be fixed or read out at an operating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetMetric {
    Sensitivity,
    Specificity,
    PPV,
    NPV,
    FPPI,
}

impl TargetMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sensitivity => "Sensitivity",
            Self::Specificity => "Specificity",
            Self::PPV => "PPV",
            Self::NPV => "NPV",
            Self::FPPI => "FPPI",
        }
    }

    pub fn higher_is_better(self) -> bool {
        self != Self::FPPI
    }

    /// Metric maximized among operating points meeting an image-level target.
    pub fn complement(self) -> TargetMetric {
        match self {
            Self::Sensitivity | Self::NPV => Self::Specificity,
            Self::Specificity | Self::PPV | Self::FPPI => Self::Sensitivity,
        }
    }

    /// Object-level counterpart (no true negatives).
    pub fn object_complement(self) -> TargetMetric {
        match self {
            Self::Sensitivity => Self::PPV,
            _ => Self::Sensitivity,
        }
    }

    fn eval(self, c: &BinaryCounts, n_images: usize) -> Option<f64> {
        match self {
            Self::Sensitivity => counting::sensitivity(c).ok(),
            Self::Specificity => counting::specificity(c).ok(),
            Self::PPV => counting::ppv(c).ok(),
            Self::NPV => counting::npv(c).ok(),
            Self::FPPI => counting::fppi(c.fp, n_images).ok(),
        }
    }
}

impl std::fmt::Display for TargetMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The chosen operating point and the metrics read out there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetReadout {
    pub target: TargetMetric,
    #[serde(rename = "target-value")]
    pub target_value: f64,
    pub threshold: f64,
    pub achieved: bool,
    pub values: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TargetReadout {
    /// Notation like `Specificity@(Sensitivity = 0.95)`.
    pub fn label(&self, metric: TargetMetric) -> String {
        format!("{metric}@({} = {})", self.target, self.target_value)
    }
}

fn meets(metric: TargetMetric, v: f64, target: f64) -> bool {
    if metric.higher_is_better() {
        v >= target
    } else {
        v <= target
    }
}

fn pick_operating_point(
    candidates: &[(f64, BinaryCounts)],
    n_images: usize,
    target: TargetMetric,
    value: f64,
    optimize: TargetMetric,
    report: &[TargetMetric],
    strict: bool,
) -> Result<TargetReadout> {
    let better = |a: f64, b: f64, m: TargetMetric| if m.higher_is_better() { a > b } else { a < b };
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, c)) in candidates.iter().enumerate() {
        let Some(v) = target.eval(c, n_images) else { continue };
        if !meets(target, v, value) {
            continue;
        }
        let o = optimize.eval(c, n_images).unwrap_or(if optimize.higher_is_better() { -1.0 } else { f64::INFINITY });
        if best.is_none_or(|(_, bo)| better(o, bo, optimize)) {
            best = Some((i, o));
        }
    }
    let (idx, achieved, warning) = match best {
        Some((i, _)) => (i, true, None),
        None => {
            if strict {
                return Err(Error::Computation(format!("{target} = {value} is not attainable on this data")));
            }
            let mut nearest: Option<(usize, f64)> = None;
            for (i, (_, c)) in candidates.iter().enumerate() {
                if let Some(v) = target.eval(c, n_images) {
                    let gap = (v - value).abs();
                    if nearest.is_none_or(|(_, g)| gap < g) {
                        nearest = Some((i, gap));
                    }
                }
            }
            let (i, _) = nearest.ok_or_else(|| Error::undefined(format!("{target} undefined at every threshold")))?;
            let got = target.eval(&candidates[i].1, n_images).unwrap_or(f64::NAN);
            (i, false, Some(format!("{target} = {value} not attainable; nearest achievable value {got} used")))
        }
    };
    let (threshold, c) = candidates[idx];
    let mut values = BTreeMap::new();
    for m in std::iter::once(target).chain(std::iter::once(optimize)).chain(report.iter().copied()) {
        values.insert(m.as_str().to_string(), m.eval(&c, n_images));
    }
    Ok(TargetReadout { target, target_value: value, threshold, achieved, values, warning })
}

/// Fix `target` at `value` (≥ for higher-is-better targets) and report metrics at
/// the threshold maximizing the complementary metric. Unattainable targets fall
/// back to the nearest achievable value with a warning unless `strict`.
pub fn metric_at_target(
    samples: &[ScoredSample],
    positive: usize,
    target: TargetMetric,
    value: f64,
    report: &[TargetMetric],
    strict: bool,
) -> Result<TargetReadout> {
    if target == TargetMetric::FPPI || report.contains(&TargetMetric::FPPI) {
        return Err(Error::Incompatible("FPPI is an object-level metric".into()));
    }
    let items = binary_view(samples, positive)?;
    let mut thresholds: Vec<f64> = items.iter().map(|x| x.0).collect();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let cands: Vec<(f64, BinaryCounts)> =
        thresholds.iter().map(|&t| (t, counts_at_threshold(samples, positive, t))).collect();
    pick_operating_point(&cands, 0, target, value, target.complement(), report, strict)
}

/// Object-level readout over detection score thresholds (pooled counts).
pub fn detection_metric_at_target(
    images: &[ImageDetections],
    target: TargetMetric,
    value: f64,
    report: &[TargetMetric],
    strict: bool,
) -> Result<TargetReadout> {
    if matches!(target, TargetMetric::Specificity | TargetMetric::NPV)
        || report.iter().any(|m| matches!(m, TargetMetric::Specificity | TargetMetric::NPV))
    {
        return Err(Error::Incompatible("object-level tasks have no true negatives".into()));
    }
    check_detections(images)?;
    let mut thresholds = distinct_thresholds(images);
    thresholds.insert(0, f64::INFINITY);
    let cands: Vec<(f64, BinaryCounts)> = thresholds
        .iter()
        .map(|&t| (t, images.iter().map(|i| i.counts_at(t)).fold(BinaryCounts::default(), |a, b| a + b)))
        .collect();
    pick_operating_point(&cands, images.len(), target, value, target.object_complement(), report, strict)
}
