//! Metric identities, value ranges, category applicability and cheat-sheet
//! records. Localization criteria and assignment strategies have records too.

use serde::Serialize;

use crate::model::ProblemCategory::{self, ImLC, InS, ObD, SemS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Counting,
    MultiThreshold,
    Overlap,
    Boundary,
    Calibration,
    Localization,
    Assignment,
}

/// Closed value range; `None` bounds are infinite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Range {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

const UNIT: Range = Range { lo: Some(0.0), hi: Some(1.0) };
const SIGNED: Range = Range { lo: Some(-1.0), hi: Some(1.0) };
const NONNEG: Range = Range { lo: Some(0.0), hi: None };
const REAL: Range = Range { lo: None, hi: None };

impl Range {
    pub fn contains(&self, v: f64) -> bool {
        self.lo.is_none_or(|lo| v >= lo - 1e-12) && self.hi.is_none_or(|hi| v <= hi + 1e-12)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricInfo {
    pub id: &'static str,
    pub name: &'static str,
    pub family: Family,
    pub range: Range,
    pub higher_is_better: bool,
    pub categories: &'static [ProblemCategory],
    pub definition: &'static str,
    pub recommendations: &'static [&'static str],
    pub pitfalls: &'static [&'static str],
}

impl MetricInfo {
    /// Worst attainable value, used for NaN substitution. Unbounded
    /// directions (and the HD family, whose worst value is per-image) give None.
    pub fn worst_value(&self) -> Option<f64> {
        if self.higher_is_better {
            self.range.lo
        } else {
            self.range.hi
        }
    }

    pub fn applies_to(&self, c: ProblemCategory) -> bool {
        self.categories.contains(&c)
    }
}

const ALL4: &[ProblemCategory] = &[ImLC, SemS, ObD, InS];
const IMG: &[ProblemCategory] = &[ImLC];
const SEG: &[ProblemCategory] = &[SemS, InS];
const OBJ: &[ProblemCategory] = &[ObD, InS];
const INS: &[ProblemCategory] = &[InS];
const NOT_SEMS: &[ProblemCategory] = &[ImLC, ObD, InS];

#[allow(clippy::too_many_arguments)]
const fn m(
    id: &'static str,
    name: &'static str,
    family: Family,
    range: Range,
    higher_is_better: bool,
    categories: &'static [ProblemCategory],
    definition: &'static str,
    recommendations: &'static [&'static str],
    pitfalls: &'static [&'static str],
) -> MetricInfo {
    MetricInfo { id, name, family, range, higher_is_better, categories, definition, recommendations, pitfalls }
}

use Family::*;

pub static METRICS: &[MetricInfo] = &[
    m("Accuracy", "Accuracy", Counting, UNIT, true, IMG,
      "Fraction of correctly classified cases: trace of the confusion matrix over its total.",
      &["Use when prevalences reflect the population and no imbalance compensation is wanted."],
      &["Dominated by the majority class under imbalance."]),
    m("BA", "Balanced Accuracy", Counting, UNIT, true, IMG,
      "Unweighted mean of per-class recalls.",
      &["Prevalence-independent; suited to imbalanced data or prevalences that differ from the population."],
      &["Ignores predictive values; a large number of false positives on a rare class barely moves it."]),
    m("WCK", "Weighted Cohen's Kappa", Counting, SIGNED, true, IMG,
      "Agreement beyond chance with per-confusion disagreement weights (linear, quadratic or custom).",
      &["Ordinal classes where neighbouring confusions are less severe."],
      &["Depends on prevalences; weights must be chosen deliberately."]),
    m("EC", "Expected Cost", Counting, REAL, false, IMG,
      "Prior-weighted average confusion cost; normalized variant divides by the best naive classifier's cost.",
      &["Unequal confusion severity with known costs; with 0-1 costs equals the error rate."],
      &["Costs and priors must be stated; unnormalized values are not comparable across tasks."]),
    m("MCC", "Matthews Correlation Coefficient", Counting, SIGNED, true, IMG,
      "Correlation between reference and predicted labels over the full confusion matrix.",
      &["Considers all four cells; option when prevalences reflect the population."],
      &["Undefined when a whole row or column is empty."]),
    m("NB", "Net Benefit", Counting, REAL, true, IMG,
      "True positives per case minus false positives per case weighted by the risk-threshold odds.",
      &["Cost-benefit decision rules in binary problems; plot over a range of risk thresholds."],
      &["Requires a risk threshold matching the clinical trade-off."]),
    m("NPV", "Negative Predictive Value", Counting, UNIT, true, IMG,
      "TN / (TN + FN).",
      &["Readout at a target value of a complementary metric."],
      &["Depends on prevalence."]),
    m("LR+", "Positive Likelihood Ratio", Counting, NONNEG, true, IMG,
      "Sensitivity / (1 - Specificity).",
      &["Prevalence-independent summary of a binary decision."],
      &["Unbounded when specificity is 1."]),
    m("Sensitivity", "Sensitivity (Recall, TPR)", Counting, UNIT, true, NOT_SEMS,
      "TP / (TP + FN).",
      &["Report together with a complementary metric (specificity or PPV)."],
      &["Can be trivially maximized by predicting everything positive."]),
    m("Specificity", "Specificity (TNR)", Counting, UNIT, true, IMG,
      "TN / (TN + FP).",
      &["Complement to sensitivity in image-level problems."],
      &["Undefined at object level (no true negatives)."]),
    m("PPV", "Positive Predictive Value (Precision)", Counting, UNIT, true, NOT_SEMS,
      "TP / (TP + FP).",
      &["Complement to sensitivity when negatives are not countable."],
      &["Depends on prevalence."]),
    m("F-beta", "F-beta Score", Counting, UNIT, true, ALL4,
      "(1 + b^2) TP / ((1 + b^2) TP + b^2 FN + FP); b weights recall over precision.",
      &["Default per-class counting metric for detection; pixel-level F1 equals DSC."],
      &["Ignores true negatives; b must reflect the FP/FN preference."]),
    m("FPPI", "False Positives per Image", Counting, NONNEG, false, OBJ,
      "Total false positives divided by the number of images.",
      &["Readout at a target sensitivity in detection."],
      &["Not normalized by the number of objects."]),
    m("AUROC", "Area under the ROC curve", MultiThreshold, UNIT, true, IMG,
      "Area under sensitivity over 1 - specificity across all thresholds (trapezoidal; ties count one half).",
      &["Default multi-threshold metric when prevalences do not reflect the population."],
      &["Not applicable at object level; insensitive to calibration."]),
    m("AP", "Average Precision", MultiThreshold, UNIT, true, NOT_SEMS,
      "Area under the precision-recall curve using the all-point precision envelope.",
      &["Detection default; for classification when prevalences reflect the population."],
      &["Per-dataset and per-image variants differ; empty images do not change per-dataset AP."]),
    m("FROC", "FROC Score", MultiThreshold, UNIT, true, OBJ,
      "Mean sensitivity at FPPI values 1/8, 1/4, 1/2, 1, 2, 4, 8.",
      &["Detection with FPPI-based operating points; empty images are penalized for false positives."],
      &["Sensitive to the FPPI grid."]),
    m("PQ", "Panoptic Quality", Overlap, UNIT, true, INS,
      "Segmentation quality (mean IoU of matched pairs) times detection quality (F1).",
      &["Instance segmentation alternative to separate F-score plus overlap metrics."],
      &["Combines two properties; equal PQ can hide very different behaviour."]),
    m("DSC", "Dice Similarity Coefficient", Overlap, UNIT, true, SEG,
      "2 |A and B| / (|A| + |B|); equals pixel-level F1.",
      &["Default overlap metric; pair with a boundary metric."],
      &["Unstable for small structures; undefined for empty reference and prediction."]),
    m("IoU", "Intersection over Union", Overlap, UNIT, true, SEG,
      "|A and B| / |A or B|; IoU = DSC / (2 - DSC).",
      &["Equivalent ranking to DSC; choice by community preference."],
      &["Unstable for small structures."]),
    m("clDice", "centerline Dice", Overlap, UNIT, true, SEG,
      "Harmonic mean of topology precision and topology sensitivity from skeletons.",
      &["Tubular structures or centerline interest; optionally with DSC."],
      &["Ignores thickness errors."]),
    m("ASSD", "Average Symmetric Surface Distance", Boundary, NONNEG, false, SEG,
      "Mean over all boundary points of both sets of the distance to the other boundary.",
      &["Contour-focused distance penalization."],
      &["Not robust to outliers; undefined for empty boundaries."]),
    m("Boundary-IoU", "Boundary Intersection over Union", Boundary, UNIT, true, SEG,
      "IoU restricted to bands of width d inside each mask boundary.",
      &["Boundary-aware overlap; tolerant of noisy references."],
      &["Band width d must be stated."]),
    m("HD", "Hausdorff Distance", Boundary, NONNEG, false, SEG,
      "Maximum over both directed boundary distances.",
      &["Worst-case distance when outliers matter."],
      &["Extremely sensitive to outliers; worst value is the image diagonal."]),
    m("HD-percentile", "Percentile Hausdorff Distance", Boundary, NONNEG, false, SEG,
      "Percentile (default 95) of the pooled directed boundary distances.",
      &["Outlier-focused but robust to single erroneous points."],
      &["Percentile must be stated; worst value is the image diagonal."]),
    m("MASD", "Mean Average Surface Distance", Boundary, NONNEG, false, SEG,
      "Average of the two directed mean boundary distances.",
      &["Contour-focused distance penalization with both directions equally weighted."],
      &["Undefined for empty boundaries."]),
    m("NSD", "Normalized Surface Distance", Boundary, UNIT, true, SEG,
      "Fraction of boundary points of both sets lying within tolerance tau of the other boundary.",
      &["Default boundary metric; tolerates annotation imprecision up to tau."],
      &["tau must reflect inter-rater variability."]),
    m("BS", "Brier Score", Calibration, UNIT, false, NOT_SEMS,
      "Mean squared distance between score vector and one-hot reference.",
      &["Proper scoring rule assessing calibration jointly with discrimination."],
      &["Mixes calibration with discrimination."]),
    m("RBS", "Root Brier Score", Calibration, UNIT, false, NOT_SEMS,
      "Square root of the Brier score; upper bound of the l2 calibration error.",
      &["Calibration-only interpretation together with an estimator of the calibration error."],
      &["Contains a refinement term; not a pure calibration measure."]),
    m("NLL", "Negative Log Likelihood", Calibration, NONNEG, false, IMG,
      "Mean negative log of the score assigned to the reference class.",
      &["Proper scoring rule for image-level classification."],
      &["Unbounded; dominated by confident errors; not applicable at object level."]),
    m("ECE", "Expected Calibration Error", Calibration, UNIT, false, NOT_SEMS,
      "Sample-weighted mean gap between confidence and accuracy over equal-width bins.",
      &["Simple top-label calibration summary with a reliability diagram."],
      &["Binning-dependent; top-label only."]),
    m("CWCE", "Class-wise Calibration Error", Calibration, UNIT, false, NOT_SEMS,
      "Per-class binned calibration error, averaged over classes (optionally weighted).",
      &["Unequal class interest; class-wise calibration."],
      &["Binning-dependent."]),
    m("ECE-KDE", "Kernel-density Calibration Error", Calibration, UNIT, false, NOT_SEMS,
      "Canonical lp calibration error estimated with a Dirichlet kernel density (leave-one-out).",
      &["Canonical calibration without binning."],
      &["Bandwidth-dependent; biased upward at small n."]),
    m("KCE", "Kernel Calibration Error", Calibration, REAL, false, NOT_SEMS,
      "Unbiased U-statistic of the squared kernel calibration error (Laplacian kernel).",
      &["Hypothesis-test style comparison of calibration between methods."],
      &["Can be negative; kernel scale must be stated."]),
];

pub struct ConceptInfo {
    pub id: &'static str,
    pub name: &'static str,
    pub family: Family,
    pub definition: &'static str,
    pub notes: &'static str,
}

pub static CONCEPTS: &[ConceptInfo] = &[
    ConceptInfo { id: "mask-iou", name: "Mask IoU", family: Localization, definition: "IoU of predicted and reference masks; passes at or above the threshold.", notes: "Standard criterion for instance segmentation." },
    ConceptInfo { id: "box-iou", name: "Box IoU", family: Localization, definition: "IoU of axis-aligned boxes.", notes: "Rough-outline localization." },
    ConceptInfo { id: "approx-iou", name: "Approximated IoU", family: Localization, definition: "IoU of the bounding boxes of masks.", notes: "Use when only rough outlines are trusted." },
    ConceptInfo { id: "boundary-iou", name: "Boundary IoU", family: Localization, definition: "Boundary IoU of masks with band width d.", notes: "Boundary-sensitive instance matching." },
    ConceptInfo { id: "ior", name: "Intersection over Reference", family: Localization, definition: "|P and R| / |R|.", notes: "Allows merged predictions to cover several references." },
    ConceptInfo { id: "center-distance", name: "Center distance", family: Localization, definition: "Physical distance of centers; passes at or below the threshold.", notes: "Position-only interest or point references." },
    ConceptInfo { id: "point-inside", name: "Point inside mask", family: Localization, definition: "Predicted center lies inside the reference mask or box.", notes: "Position-only interest." },
    ConceptInfo { id: "mask-iou-gt-zero", name: "Mask IoU > 0", family: Localization, definition: "Any overlap counts as a hit.", notes: "Large predictions can hit several references." },
    ConceptInfo { id: "greedy-by-score", name: "Greedy by score", family: Assignment, definition: "Predictions in descending score order take their best free reference.", notes: "Default when scores are available." },
    ConceptInfo { id: "greedy-by-localization", name: "Greedy by localization", family: Assignment, definition: "Pairs are matched in descending localization quality.", notes: "No scores available." },
    ConceptInfo { id: "hungarian", name: "Optimal (Hungarian) matching", family: Assignment, definition: "Maximizes total localization affinity over a one-to-one matching.", notes: "No scores available; globally optimal." },
    ConceptInfo { id: "overlap-gt-half", name: "Matching by IoU > 0.5", family: Assignment, definition: "Pairs with IoU strictly above 0.5 are unique by construction.", notes: "Only for non-overlapping predictions." },
];

pub fn metric(id: &str) -> Option<&'static MetricInfo> {
    METRICS.iter().find(|m| m.id == id)
}

pub fn concept(id: &str) -> Option<&'static ConceptInfo> {
    CONCEPTS.iter().find(|c| c.id == id)
}

/// Structured cheat-sheet record for a metric or concept id.
pub fn cheatsheet(id: &str) -> Option<serde_json::Value> {
    if let Some(m) = metric(id) {
        let range = serde_json::json!([m.range.lo, m.range.hi]);
        return Some(serde_json::json!({
            "id": m.id,
            "name": m.name,
            "family": m.family,
            "definition": m.definition,
            "range": range,
            "higher-is-better": m.higher_is_better,
            "categories": m.categories,
            "recommendations": m.recommendations,
            "pitfalls": m.pitfalls,
        }));
    }
    concept(id).map(|c| {
        serde_json::json!({
            "id": c.id,
            "name": c.name,
            "family": c.family,
            "definition": c.definition,
            "notes": c.notes,
        })
    })
}
