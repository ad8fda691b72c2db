//! Object-level validation: localization criteria, assignment strategies,
//! cardinalities, panoptic quality and the empty-image policy.
//!
//! Box and point coordinates use continuous pixel units where pixel `i`
//! spans `[i, i+1)`. Distances are converted to physical units with the
//! mask spacing or the criterion's `spacing`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::boundary;
use crate::error::{Error, Result};
use crate::model::{BinaryCounts, Instance, LabelMap, Location};
use crate::threshold::ImageDetections;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionKind {
    BoxIou,
    ApproxIou,
    MaskIou,
    BoundaryIou,
    Ior,
    CenterDistance,
    PointInside,
    MaskIouGtZero,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 8] = [
        Self::BoxIou,
        Self::ApproxIou,
        Self::MaskIou,
        Self::BoundaryIou,
        Self::Ior,
        Self::CenterDistance,
        Self::PointInside,
        Self::MaskIouGtZero,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BoxIou => "box-iou",
            Self::ApproxIou => "approx-iou",
            Self::MaskIou => "mask-iou",
            Self::BoundaryIou => "boundary-iou",
            Self::Ior => "ior",
            Self::CenterDistance => "center-distance",
            Self::PointInside => "point-inside",
            Self::MaskIouGtZero => "mask-iou-gt-zero",
        }
    }

    /// Overlap ratios thresholded in (0, 1].
    pub fn is_overlap(self) -> bool {
        matches!(self, Self::BoxIou | Self::ApproxIou | Self::MaskIou | Self::BoundaryIou | Self::Ior)
    }

    pub fn needs_threshold(self) -> bool {
        !matches!(self, Self::PointInside | Self::MaskIouGtZero)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Schema(format!("unknown localization criterion {s:?}")))
    }
}

/// A localization criterion with its threshold (τ for center distance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationCriterion {
    pub kind: CriterionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Band width for boundary IoU (physical units).
    #[serde(default, rename = "boundary-width", skip_serializing_if = "Option::is_none")]
    pub boundary_width: Option<f64>,
    /// Physical pixel size for box and point coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Vec<f64>>,
}

pub const DEFAULT_BOUNDARY_WIDTH: f64 = 2.0;

impl LocalizationCriterion {
    pub fn new(kind: CriterionKind, threshold: Option<f64>) -> Result<Self> {
        let c = Self { kind, threshold, boundary_width: None, spacing: None };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.needs_threshold(), self.threshold) {
            (false, Some(_)) => Err(Error::invalid(format!("{} takes no threshold", self.kind.as_str()))),
            (true, None) => Err(Error::invalid(format!("{} needs a threshold", self.kind.as_str()))),
            (true, Some(t)) if self.kind.is_overlap() && !(t > 0.0 && t <= 1.0) => {
                Err(Error::invalid(format!("overlap threshold {t} outside (0,1]")))
            }
            (true, Some(t)) if self.kind == CriterionKind::CenterDistance && !(t > 0.0 && t.is_finite()) => {
                Err(Error::invalid(format!("distance threshold {t} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Criterion value, pass/fail verdict and any pitfall notice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScore {
    pub value: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl LocalizationScore {
    /// Matching preference; higher is better.
    pub fn affinity(&self, kind: CriterionKind) -> f64 {
        match kind {
            CriterionKind::CenterDistance => 1.0 / (1.0 + self.value),
            CriterionKind::PointInside => 1.0,
            _ => self.value,
        }
    }
}

type Aabb = (Vec<f64>, Vec<f64>);

fn mask_bbox(m: &LabelMap) -> Option<Aabb> {
    let d = m.shape().len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut any = false;
    for (i, &v) in m.values().iter().enumerate() {
        if v != 0 {
            any = true;
            for (ax, c) in m.coords(i).into_iter().enumerate() {
                lo[ax] = lo[ax].min(c as f64);
                hi[ax] = hi[ax].max(c as f64 + 1.0);
            }
        }
    }
    any.then_some((lo, hi))
}

fn bbox_of(loc: &Location) -> Result<Aabb> {
    match loc {
        Location::Box { min, max } => Ok((min.clone(), max.clone())),
        Location::Mask(m) => mask_bbox(m).ok_or_else(|| Error::invalid("empty instance mask")),
        Location::Point(_) => Err(Error::Incompatible("points have no extent".into())),
    }
}

fn box_volume(b: &Aabb) -> f64 {
    b.0.iter().zip(&b.1).map(|(a, z)| z - a).product()
}

fn box_intersection(a: &Aabb, b: &Aabb) -> f64 {
    (0..a.0.len()).map(|k| (a.1[k].min(b.1[k]) - a.0[k].max(b.0[k])).max(0.0)).product()
}

fn box_iou(a: &Aabb, b: &Aabb) -> Result<f64> {
    if a.0.len() != b.0.len() {
        return Err(Error::invalid("box dimension mismatch"));
    }
    let inter = box_intersection(a, b);
    let union = box_volume(a) + box_volume(b) - inter;
    if union > 0.0 {
        Ok(inter / union)
    } else {
        Err(Error::invalid("degenerate boxes with zero union"))
    }
}

fn masks<'a>(p: &'a Location, r: &'a Location, what: &str) -> Result<(&'a LabelMap, &'a LabelMap)> {
    match (p, r) {
        (Location::Mask(a), Location::Mask(b)) => {
            if a.shape() != b.shape() {
                return Err(Error::invalid("instance masks differ in shape"));
            }
            Ok((a, b))
        }
        _ => Err(Error::Incompatible(format!("{what} needs masks for both prediction and reference"))),
    }
}

fn mask_overlap(p: &LabelMap, r: &LabelMap) -> (usize, usize, usize) {
    let mut inter = 0;
    let (mut np, mut nr) = (0, 0);
    for (&a, &b) in p.values().iter().zip(r.values()) {
        np += (a != 0) as usize;
        nr += (b != 0) as usize;
        inter += (a != 0 && b != 0) as usize;
    }
    (inter, np, nr)
}

/// Center in continuous pixel units.
fn center_px(loc: &Location) -> Result<Vec<f64>> {
    match loc {
        Location::Point(p) => Ok(p.clone()),
        Location::Box { min, max } => Ok(min.iter().zip(max).map(|(a, b)| 0.5 * (a + b)).collect()),
        Location::Mask(m) => {
            let d = m.shape().len();
            let mut acc = vec![0.0; d];
            let mut n = 0usize;
            for (i, &v) in m.values().iter().enumerate() {
                if v != 0 {
                    n += 1;
                    for (ax, c) in m.coords(i).into_iter().enumerate() {
                        acc[ax] += c as f64 + 0.5;
                    }
                }
            }
            if n == 0 {
                return Err(Error::invalid("empty instance mask"));
            }
            Ok(acc.into_iter().map(|a| a / n as f64).collect())
        }
    }
}

fn spacing_for(loc: &Location, crit: &LocalizationCriterion, d: usize) -> Vec<f64> {
    match loc {
        Location::Mask(m) => m.spacing().to_vec(),
        _ => crit.spacing.clone().unwrap_or_else(|| vec![1.0; d]),
    }
}

fn contains(region: &Location, c: &[f64]) -> Result<bool> {
    match region {
        Location::Box { min, max } => Ok((0..min.len()).all(|k| min[k] <= c[k] && c[k] <= max[k])),
        Location::Mask(m) => {
            let mut idx = Vec::with_capacity(c.len());
            for (k, &x) in c.iter().enumerate() {
                if x < 0.0 || x >= m.shape()[k] as f64 {
                    return Ok(false);
                }
                idx.push(x.floor() as usize);
            }
            Ok(m.values()[m.index(&idx)] != 0)
        }
        Location::Point(_) => Err(Error::Incompatible("point-inside needs a reference region".into())),
    }
}

/// Evaluate a criterion between one prediction and one reference.
pub fn localization_score(pred: &Instance, reference: &Instance, crit: &LocalizationCriterion) -> Result<LocalizationScore> {
    crit.validate()?;
    if pred.n_dims() != reference.n_dims() {
        return Err(Error::invalid("prediction and reference differ in dimensionality"));
    }
    let thr = crit.threshold.unwrap_or(0.0);
    let (p, r) = (&pred.location, &reference.location);
    let score = |value: f64, passed: bool| Ok(LocalizationScore { value, passed, warning: None });
    match crit.kind {
        CriterionKind::BoxIou => match (p, r) {
            (Location::Box { .. }, Location::Box { .. }) => {
                let v = box_iou(&bbox_of(p)?, &bbox_of(r)?)?;
                score(v, v >= thr)
            }
            _ => Err(Error::Incompatible("box-iou needs boxes for both objects".into())),
        },
        CriterionKind::ApproxIou => {
            let v = box_iou(&bbox_of(p)?, &bbox_of(r)?)?;
            score(v, v >= thr)
        }
        CriterionKind::MaskIou | CriterionKind::MaskIouGtZero => {
            let (pm, rm) = masks(p, r, crit.kind.as_str())?;
            let (inter, np, nr) = mask_overlap(pm, rm);
            let union = np + nr - inter;
            if union == 0 {
                return Err(Error::invalid("both instance masks are empty"));
            }
            let v = inter as f64 / union as f64;
            if crit.kind == CriterionKind::MaskIou {
                return score(v, v >= thr);
            }
            let warning = (v > 0.0 && np >= 2 * nr).then(|| {
                format!("mask-iou>0 accepted a prediction {}x the reference size; large predictions pass trivially", np / nr.max(1))
            });
            Ok(LocalizationScore { value: v, passed: v > 0.0, warning })
        }
        CriterionKind::BoundaryIou => {
            let (pm, rm) = masks(p, r, "boundary-iou")?;
            let v = boundary::boundary_iou(rm, pm, crit.boundary_width.unwrap_or(DEFAULT_BOUNDARY_WIDTH))?;
            score(v, v >= thr)
        }
        CriterionKind::Ior => {
            let v = match (p, r) {
                (Location::Mask(_), Location::Mask(_)) => {
                    let (pm, rm) = masks(p, r, "ior")?;
                    let (inter, _, nr) = mask_overlap(pm, rm);
                    if nr == 0 {
                        return Err(Error::invalid("empty reference mask"));
                    }
                    inter as f64 / nr as f64
                }
                _ => {
                    let (pb, rb) = (bbox_of(p)?, bbox_of(r)?);
                    let vol = box_volume(&rb);
                    if vol <= 0.0 {
                        return Err(Error::invalid("degenerate reference box"));
                    }
                    box_intersection(&pb, &rb) / vol
                }
            };
            score(v, v >= thr)
        }
        CriterionKind::CenterDistance => {
            let (cp, cr) = (center_px(p)?, center_px(r)?);
            let d = cp.len();
            let (sp, sr) = (spacing_for(p, crit, d), spacing_for(r, crit, d));
            let dist = (0..d).map(|k| (cp[k] * sp[k] - cr[k] * sr[k]).powi(2)).sum::<f64>().sqrt();
            score(dist, dist <= thr)
        }
        CriterionKind::PointInside => {
            let inside = contains(r, &center_px(p)?)?;
            score(inside as u8 as f64, inside)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    GreedyByScore,
    GreedyByLocalization,
    Hungarian,
    OverlapGtHalf,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::GreedyByScore, Self::GreedyByLocalization, Self::Hungarian, Self::OverlapGtHalf];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GreedyByScore => "greedy-by-score",
            Self::GreedyByLocalization => "greedy-by-localization",
            Self::Hungarian => "hungarian",
            Self::OverlapGtHalf => "overlap-gt-half",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentStrategy {
    pub kind: StrategyKind,
    #[serde(default, rename = "punish-double-assignments")]
    pub punish_double_assignments: bool,
    /// Let one prediction cover several references (IoR only); extra
    /// references are reported as merges instead of misses.
    #[serde(default, rename = "allow-merges")]
    pub allow_merges: bool,
}

impl AssignmentStrategy {
    pub fn new(kind: StrategyKind, punish: bool) -> Self {
        Self { kind, punish_double_assignments: punish, allow_merges: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub reference: usize,
    pub score: f64,
}

/// Outcome of one matching. Indices refer to the input slices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    #[serde(rename = "unmatched-predictions")]
    pub unmatched_predictions: Vec<usize>,
    #[serde(rename = "unmatched-references")]
    pub unmatched_references: Vec<usize>,
    /// Predictions that localized an already matched reference.
    #[serde(rename = "double-assignments")]
    pub double_assignments: Vec<usize>,
    pub punished: bool,
    /// (prediction, reference) pairs absorbed as merges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MatchResult {
    /// Object-level TP/FP/FN (TN is always 0).
    pub fn counts(&self) -> BinaryCounts {
        let dup = if self.punished { self.double_assignments.len() } else { 0 };
        BinaryCounts::new(
            self.pairs.len() as u64,
            (self.unmatched_predictions.len() + dup) as u64,
            self.unmatched_references.len() as u64,
            0,
        )
    }

    pub fn total_score(&self) -> f64 {
        self.pairs.iter().map(|p| p.score).sum()
    }
}

fn check_strategy(preds: &[Instance], crit: &LocalizationCriterion, s: &AssignmentStrategy) -> Result<()> {
    if s.kind == StrategyKind::GreedyByScore && preds.iter().any(|p| p.score.is_none()) {
        return Err(Error::Incompatible("greedy-by-score matching needs a score on every prediction".into()));
    }
    if s.kind == StrategyKind::OverlapGtHalf
        && !matches!(crit.kind, CriterionKind::BoxIou | CriterionKind::ApproxIou | CriterionKind::MaskIou | CriterionKind::BoundaryIou)
    {
        return Err(Error::Incompatible("overlap > 0.5 matching needs an IoU-type criterion".into()));
    }
    if s.allow_merges && crit.kind != CriterionKind::Ior {
        return Err(Error::Incompatible("merge allowance is only defined for the IoR criterion".into()));
    }
    Ok(())
}

/// Match predictions to references of one class.
pub fn assign(
    preds: &[Instance],
    refs: &[Instance],
    crit: &LocalizationCriterion,
    strategy: &AssignmentStrategy,
) -> Result<MatchResult> {
    if let Some(c) = preds.first().or(refs.first()).map(|i| i.class) {
        if preds.iter().chain(refs).any(|i| i.class != c) {
            return Err(Error::invalid("assign() works on one class; use assign_per_class"));
        }
    }
    check_strategy(preds, crit, strategy)?;
    let (np, nr) = (preds.len(), refs.len());
    let mut scores: Vec<Vec<Option<LocalizationScore>>> = Vec::with_capacity(np);
    let mut warnings = Vec::new();
    for p in preds {
        let mut row = Vec::with_capacity(nr);
        for r in refs {
            let s = localization_score(p, r, crit)?;
            if s.passed {
                if let Some(w) = &s.warning {
                    if !warnings.contains(w) {
                        warnings.push(w.clone());
                    }
                }
                row.push(Some(s));
            } else {
                row.push(None);
            }
        }
        scores.push(row);
    }
    let aff = |i: usize, j: usize| scores[i][j].as_ref().map(|s| s.affinity(crit.kind));
    let mut ref_of: Vec<Option<usize>> = vec![None; np];
    match strategy.kind {
        StrategyKind::GreedyByScore => {
            let mut order: Vec<usize> = (0..np).collect();
            order.sort_by(|&a, &b| preds[b].score.unwrap().total_cmp(&preds[a].score.unwrap()).then(a.cmp(&b)));
            let mut taken = vec![false; nr];
            for i in order {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..nr {
                    if let (false, Some(a)) = (taken[j], aff(i, j)) {
                        if best.is_none_or(|(_, b)| a > b) {
                            best = Some((j, a));
                        }
                    }
                }
                if let Some((j, _)) = best {
                    taken[j] = true;
                    ref_of[i] = Some(j);
                }
            }
        }
        StrategyKind::GreedyByLocalization => {
            let mut cand: Vec<(usize, usize, f64)> = Vec::new();
            for i in 0..np {
                for j in 0..nr {
                    if let Some(a) = aff(i, j) {
                        cand.push((i, j, a));
                    }
                }
            }
            cand.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.1.cmp(&y.1)).then(x.0.cmp(&y.0)));
            let mut taken = vec![false; nr];
            for (i, j, _) in cand {
                if ref_of[i].is_none() && !taken[j] {
                    ref_of[i] = Some(j);
                    taken[j] = true;
                }
            }
        }
        StrategyKind::Hungarian => {
            let w: Vec<Vec<f64>> = (0..np).map(|i| (0..nr).map(|j| aff(i, j).unwrap_or(0.0)).collect()).collect();
            let (assignment, _) = hungarian_max(&w);
            for (i, a) in assignment.into_iter().enumerate() {
                if let Some(j) = a {
                    if scores[i][j].is_some() {
                        ref_of[i] = Some(j);
                    }
                }
            }
        }
        StrategyKind::OverlapGtHalf => {
            let mut taken = vec![None; nr];
            for i in 0..np {
                for j in 0..nr {
                    if scores[i][j].as_ref().is_some_and(|s| s.value > 0.5) {
                        if ref_of[i].is_some() || taken[j].is_some() {
                            return Err(Error::Incompatible(
                                "overlap > 0.5 matching is ambiguous here; predictions overlap each other".into(),
                            ));
                        }
                        ref_of[i] = Some(j);
                        taken[j] = Some(i);
                    }
                }
            }
        }
    }
    let mut out = MatchResult { punished: strategy.punish_double_assignments, warnings, ..Default::default() };
    let mut ref_taken = vec![false; nr];
    for (i, r) in ref_of.iter().enumerate() {
        match r {
            Some(j) => {
                ref_taken[*j] = true;
                out.pairs.push(MatchPair { prediction: i, reference: *j, score: scores[i][*j].as_ref().unwrap().value });
            }
            None if scores[i].iter().any(|s| s.is_some()) => out.double_assignments.push(i),
            None => out.unmatched_predictions.push(i),
        }
    }
    out.unmatched_references = (0..nr).filter(|&j| !ref_taken[j]).collect();
    if strategy.allow_merges {
        let matched: Vec<usize> = out.pairs.iter().map(|p| p.prediction).collect();
        out.unmatched_references.retain(|&j| {
            match matched.iter().find(|&&i| scores[i][j].is_some()) {
                Some(&i) => {
                    out.merges.push((i, j));
                    false
                }
                None => true,
            }
        });
    }
    out.pairs.sort_by_key(|p| p.prediction);
    Ok(out)
}

/// Split by class and match each class separately; indices stay global.
pub fn assign_per_class(
    preds: &[Instance],
    refs: &[Instance],
    crit: &LocalizationCriterion,
    strategy: &AssignmentStrategy,
) -> Result<BTreeMap<u32, MatchResult>> {
    let mut classes: Vec<u32> = preds.iter().chain(refs).map(|i| i.class).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    for c in classes {
        let pi: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].class == c).collect();
        let ri: Vec<usize> = (0..refs.len()).filter(|&j| refs[j].class == c).collect();
        let p: Vec<Instance> = pi.iter().map(|&i| preds[i].clone()).collect();
        let r: Vec<Instance> = ri.iter().map(|&j| refs[j].clone()).collect();
        let mut m = assign(&p, &r, crit, strategy)?;
        for pair in &mut m.pairs {
            pair.prediction = pi[pair.prediction];
            pair.reference = ri[pair.reference];
        }
        for x in &mut m.unmatched_predictions {
            *x = pi[*x];
        }
        for x in &mut m.double_assignments {
            *x = pi[*x];
        }
        for x in &mut m.unmatched_references {
            *x = ri[*x];
        }
        for (a, b) in &mut m.merges {
            *a = pi[*a];
            *b = ri[*b];
        }
        out.insert(c, m);
    }
    Ok(out)
}

/// Maximum-weight assignment on a rectangular matrix of non-negative weights
/// (O(n³) with row/column potentials on the square padding). Returns the
/// column per row and the total weight of the chosen cells.
pub fn hungarian_max(w: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let rows = w.len();
    let cols = w.first().map_or(0, |r| r.len());
    let n = rows.max(cols);
    if n == 0 {
        return (vec![None; rows], 0.0);
    }
    let cost = |i: usize, j: usize| if i < rows && j < cols { -w[i][j] } else { 0.0 };
    // 1-based arrays; p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            assignment[i - 1] = Some(j - 1);
            total += w[i - 1][j - 1];
        }
    }
    (assignment, total)
}

/// Per-image Sensitivity, PPV and F1 under the empty-image policy:
/// no references excludes Sensitivity; no predictions and no references
/// gives PPV = F1 = 1; false positives only gives PPV = F1 = 0; misses only
/// gives Sensitivity = 0 and excludes PPV and F1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyValues {
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub f1: Option<f64>,
}

pub fn nan_policy(c: &BinaryCounts) -> PolicyValues {
    let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
    match (c.tp, c.fp, c.fn_) {
        (0, 0, 0) => PolicyValues { sensitivity: None, ppv: Some(1.0), f1: Some(1.0) },
        (0, _, 0) => PolicyValues { sensitivity: None, ppv: Some(0.0), f1: Some(0.0) },
        (0, 0, _) => PolicyValues { sensitivity: Some(0.0), ppv: None, f1: None },
        _ => PolicyValues {
            sensitivity: Some(tp / (tp + fn_)),
            ppv: Some(tp / (tp + fp)),
            f1: Some(2.0 * tp / (2.0 * tp + fp + fn_)),
        },
    }
}

/// Counts pooled over images.
pub fn pooled_counts(per_image: &[BinaryCounts]) -> BinaryCounts {
    per_image.iter().fold(BinaryCounts::default(), |a, &b| a + b)
}

/// Mean of per-image policy values, skipping excluded images.
pub fn per_image_mean(per_image: &[BinaryCounts], pick: impl Fn(&PolicyValues) -> Option<f64>) -> Result<f64> {
    let v: Vec<f64> = per_image.iter().filter_map(|c| pick(&nan_policy(c))).collect();
    if v.is_empty() {
        return Err(Error::undefined("every image was excluded"));
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Panoptic quality split into its factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanopticQuality {
    pub pq: f64,
    /// Mean IoU of matched pairs; absent when nothing matched.
    pub sq: Option<f64>,
    /// F1 of the matching.
    pub dq: f64,
}

/// PQ = SQ × DQ; pair scores must be IoU values.
pub fn panoptic_quality(m: &MatchResult) -> PanopticQuality {
    let c = m.counts();
    let dq = nan_policy(&c).f1.unwrap_or(0.0);
    if c.tp == 0 {
        let pq = if c.fp == 0 && c.fn_ == 0 { 1.0 } else { 0.0 };
        return PanopticQuality { pq, sq: None, dq };
    }
    let sq = m.total_score() / c.tp as f64;
    PanopticQuality { pq: sq * dq, sq: Some(sq), dq }
}

/// Scored detections of one image for AP/FROC; unpunished double assignments are dropped.
pub fn image_detections(preds: &[Instance], n_references: usize, m: &MatchResult) -> Result<ImageDetections> {
    let score = |i: usize| {
        preds[i].score.ok_or_else(|| Error::Incompatible("multi-threshold metrics need prediction scores".into()))
    };
    let mut detections = Vec::new();
    for p in &m.pairs {
        detections.push((score(p.prediction)?, true));
    }
    for &i in &m.unmatched_predictions {
        detections.push((score(i)?, false));
    }
    if m.punished {
        for &i in &m.double_assignments {
            detections.push((score(i)?, false));
        }
    }
    Ok(ImageDetections { detections, n_references: n_references - m.merges.len() })
}

/// The default localization threshold grid 0.5, 0.55, …, 0.9.
pub fn threshold_grid() -> Vec<f64> {
    (0..9).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Mean of a metric evaluated at each localization threshold.
pub fn average_over_thresholds(grid: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("empty threshold grid"));
    }
    let mut s = 0.0;
    for &t in grid {
        s += f(t)?;
    }
    Ok(s / grid.len() as f64)
}

/// Partition a matching by object size. Bin `k` holds sizes in
/// `[edges[k-1], edges[k])`; pairs and merges follow their reference,
/// unmatched predictions their own size.
pub fn size_stratify(preds: &[Instance], refs: &[Instance], m: &MatchResult, edges: &[f64]) -> Vec<MatchResult> {
    let bin = |size: f64| edges.iter().filter(|&&e| size >= e).count();
    let mut out = vec![
        MatchResult { punished: m.punished, ..Default::default() };
        edges.len() + 1
    ];
    for p in &m.pairs {
        out[bin(refs[p.reference].size())].pairs.push(p.clone());
    }
    for &j in &m.unmatched_references {
        out[bin(refs[j].size())].unmatched_references.push(j);
    }
    for &i in &m.unmatched_predictions {
        out[bin(preds[i].size())].unmatched_predictions.push(i);
    }
    for &i in &m.double_assignments {
        out[bin(preds[i].size())].double_assignments.push(i);
    }
    for &(i, j) in &m.merges {
        out[bin(refs[j].size())].merges.push((i, j));
    }
    out
}
