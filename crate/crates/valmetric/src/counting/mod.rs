//! Fixed-confusion-matrix metrics.
//!
//! Binary rates take [`BinaryCounts`]; multi-class metrics take a
//! [`ConfusionMatrix`]. Zero denominators produce [`Error::Undefined`], which
//! the aggregation layer turns into an excluded value.

mod skeleton;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryCounts, ConfusionMatrix, LabelMap, ScoredSample};

pub use skeleton::{skeletonize, SKELETON_ALGORITHM_2D, SKELETON_ALGORITHM_3D};

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::undefined(format!("{what}: zero denominator")))
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.trace() as f64, cm.total() as f64, "accuracy")
}

pub fn error_rate(cm: &ConfusionMatrix) -> Result<f64> {
    accuracy(cm).map(|a| 1.0 - a)
}

/// Mean per-class recall. Classes without reference samples are skipped.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let recalls: Vec<f64> = (0..cm.n_classes())
        .filter(|&i| cm.row_sum(i) > 0)
        .map(|i| cm.get(i, i) as f64 / cm.row_sum(i) as f64)
        .collect();
    if recalls.is_empty() {
        return Err(Error::undefined("balanced accuracy: no class has reference samples"));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Matthews correlation; for C > 2 the covariance generalization
/// (c·s − Σ p_k t_k) / sqrt((s² − Σ p_k²)(s² − Σ t_k²)).
pub fn mcc(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.n_classes();
    let s = cm.total() as f64;
    let c = cm.trace() as f64;
    let (mut pt, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let p = cm.col_sum(k) as f64;
        let t = cm.row_sum(k) as f64;
        pt += p * t;
        pp += p * p;
        tt += t * t;
    }
    let den = ((s * s - pp) * (s * s - tt)).sqrt();
    if den > 0.0 {
        Ok((c * s - pt) / den)
    } else {
        Err(Error::undefined("MCC: a reference or prediction marginal is degenerate"))
    }
}

/// Misclassification costs c_ij (true i, decided j) with optional class priors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<f64>>,
}

impl CostMatrix {
    pub fn new(costs: Vec<Vec<f64>>, priors: Option<Vec<f64>>) -> Result<Self> {
        let m = Self { costs, priors };
        m.validate()?;
        Ok(m)
    }

    /// 0 on the diagonal, 1 elsewhere.
    pub fn zero_one(c: usize) -> Self {
        let costs = (0..c).map(|i| (0..c).map(|j| if i == j { 0.0 } else { 1.0 }).collect()).collect();
        Self { costs, priors: None }
    }

    /// c_ij = 1/(C·P_i) off the diagonal; makes EC equal to 1 − BA.
    pub fn balanced(priors: &[f64]) -> Result<Self> {
        let c = priors.len();
        if priors.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid("balanced costs need strictly positive priors"));
        }
        let costs = (0..c)
            .map(|i| (0..c).map(|j| if i == j { 0.0 } else { 1.0 / (c as f64 * priors[i]) }).collect())
            .collect();
        Ok(Self { costs, priors: None })
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.costs.len();
        if c == 0 || self.costs.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("cost matrix must be square and nonempty"));
        }
        if self.costs.iter().flatten().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid("costs must be finite and non-negative"));
        }
        if let Some(p) = &self.priors {
            if p.len() != c {
                return Err(Error::invalid("prior count differs from class count"));
            }
            if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("priors must be non-negative and sum to 1"));
            }
        }
        Ok(())
    }
}

/// Empirical class prevalences (row sums over total).
pub fn prevalences(cm: &ConfusionMatrix) -> Result<Vec<f64>> {
    let n = cm.total() as f64;
    if n == 0.0 {
        return Err(Error::undefined("empty confusion matrix"));
    }
    Ok((0..cm.n_classes()).map(|i| cm.row_sum(i) as f64 / n).collect())
}

/// EC = Σ_ij P_i c_ij R_ij with R_ij the row-normalized confusion. The
/// normalized form divides by the cost of the best constant decision.
pub fn expected_cost(cm: &ConfusionMatrix, costs: &CostMatrix, normalized: bool) -> Result<f64> {
    costs.validate()?;
    let c = cm.n_classes();
    if costs.costs.len() != c {
        return Err(Error::invalid(format!("cost matrix is {}×{0}, confusion matrix {c}×{c}", costs.costs.len())));
    }
    let priors = match &costs.priors {
        Some(p) => p.clone(),
        None => prevalences(cm)?,
    };
    let mut ec = 0.0;
    for i in 0..c {
        if priors[i] == 0.0 {
            continue;
        }
        let row = cm.row_sum(i) as f64;
        if row == 0.0 {
            return Err(Error::undefined(format!("class {i} has a prior but no reference samples")));
        }
        for j in 0..c {
            ec += priors[i] * costs.costs[i][j] * cm.get(i, j) as f64 / row;
        }
    }
    if !normalized {
        return Ok(ec);
    }
    let naive = (0..c)
        .map(|j| (0..c).map(|i| priors[i] * costs.costs[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    ratio(ec, naive, "normalized expected cost")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaScheme {
    Linear,
    Quadratic,
    Custom,
}

/// Disagreement weights for Cohen's kappa; w_ii = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaWeights {
    pub weights: Vec<Vec<f64>>,
    pub scheme: KappaScheme,
}

impl KappaWeights {
    pub fn linear(c: usize) -> Self {
        Self::from_fn(c, KappaScheme::Linear, |d| d)
    }

    /// Known to produce counterintuitive values on some tables; reports flag it.
    pub fn quadratic(c: usize) -> Self {
        Self::from_fn(c, KappaScheme::Quadratic, |d| d * d)
    }

    pub fn custom(weights: Vec<Vec<f64>>) -> Result<Self> {
        let c = weights.len();
        if c == 0 || weights.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("kappa weights must be square"));
        }
        if (0..c).any(|i| weights[i][i] != 0.0) {
            return Err(Error::invalid("kappa weights need a zero diagonal"));
        }
        Ok(Self { weights, scheme: KappaScheme::Custom })
    }

    fn from_fn(c: usize, scheme: KappaScheme, f: impl Fn(f64) -> f64) -> Self {
        let weights = (0..c)
            .map(|i| (0..c).map(|j| f((i as f64 - j as f64).abs())).collect())
            .collect();
        Self { weights, scheme }
    }
}

/// 1 − Σ w·o / Σ w·e with observed proportions o and chance proportions e.
pub fn weighted_cohens_kappa(cm: &ConfusionMatrix, w: &KappaWeights) -> Result<f64> {
    let c = cm.n_classes();
    if w.weights.len() != c {
        return Err(Error::invalid("kappa weight dimension differs from class count"));
    }
    let n = cm.total() as f64;
    if n == 0.0 {
        return Err(Error::undefined("kappa: empty matrix"));
    }
    let (mut wo, mut we) = (0.0, 0.0);
    for i in 0..c {
        for j in 0..c {
            wo += w.weights[i][j] * cm.get(i, j) as f64 / n;
            we += w.weights[i][j] * (cm.row_sum(i) as f64 / n) * (cm.col_sum(j) as f64 / n);
        }
    }
    if we > 0.0 {
        Ok(1.0 - wo / we)
    } else {
        Err(Error::undefined("kappa: zero expected disagreement"))
    }
}

pub fn sensitivity(c: &BinaryCounts) -> Result<f64> {
    ratio(c.tp as f64, (c.tp + c.fn_) as f64, "sensitivity")
}

pub fn specificity(c: &BinaryCounts) -> Result<f64> {
    ratio(c.tn as f64, (c.tn + c.fp) as f64, "specificity")
}

pub fn ppv(c: &BinaryCounts) -> Result<f64> {
    ratio(c.tp as f64, (c.tp + c.fp) as f64, "PPV")
}

pub fn npv(c: &BinaryCounts) -> Result<f64> {
    ratio(c.tn as f64, (c.tn + c.fn_) as f64, "NPV")
}

/// Bookmaker informedness, Sens + Spec − 1.
pub fn informedness(c: &BinaryCounts) -> Result<f64> {
    Ok(sensitivity(c)? + specificity(c)? - 1.0)
}

/// Positive likelihood ratio TPR / (1 − TNR).
pub fn lr_plus(c: &BinaryCounts) -> Result<f64> {
    let sens = sensitivity(c)?;
    let fpr = 1.0 - specificity(c)?;
    ratio(sens, fpr, "LR+ (no false positives)")
}

/// (1+β²)TP / ((1+β²)TP + β²FN + FP).
pub fn f_beta(c: &BinaryCounts, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let b2 = beta * beta;
    let num = (1.0 + b2) * c.tp as f64;
    ratio(num, num + b2 * c.fn_ as f64 + c.fp as f64, "F-beta")
}

pub fn dsc(c: &BinaryCounts) -> Result<f64> {
    ratio(2.0 * c.tp as f64, (2 * c.tp + c.fp + c.fn_) as f64, "DSC")
}

pub fn iou(c: &BinaryCounts) -> Result<f64> {
    ratio(c.tp as f64, (c.tp + c.fp + c.fn_) as f64, "IoU")
}

fn check_risk_threshold(pt: f64) -> Result<()> {
    if pt > 0.0 && pt < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("risk threshold {pt} outside (0,1)")))
    }
}

/// TP/N − (FP/N)·p_t/(1−p_t).
pub fn net_benefit(c: &BinaryCounts, pt: f64) -> Result<f64> {
    check_risk_threshold(pt)?;
    let n = c.total() as f64;
    if n == 0.0 {
        return Err(Error::undefined("net benefit: no cases"));
    }
    Ok(c.tp as f64 / n - (c.fp as f64 / n) * pt / (1.0 - pt))
}

/// Binary counts when every case with score[positive] ≥ threshold is called positive.
pub fn counts_at_threshold(samples: &[ScoredSample], positive: usize, threshold: f64) -> BinaryCounts {
    let mut c = BinaryCounts::default();
    for s in samples {
        match (s.reference == positive, s.scores[positive] >= threshold) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Decision curve: net benefit with the risk threshold doubling as decision threshold.
pub fn net_benefit_curve(samples: &[ScoredSample], positive: usize, thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    let c = crate::model::check_samples(samples)?;
    if positive >= c {
        return Err(Error::invalid("positive class out of range"));
    }
    thresholds
        .iter()
        .map(|&pt| Ok((pt, net_benefit(&counts_at_threshold(samples, positive, pt), pt)?)))
        .collect()
}

/// False positives per image.
pub fn fppi(total_fp: u64, n_images: usize) -> Result<f64> {
    if n_images == 0 {
        return Err(Error::invalid("FPPI needs at least one image"));
    }
    Ok(total_fp as f64 / n_images as f64)
}

/// Default FPPI operating points.
pub const FPPI_GRID: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

/// Centerline Dice on the foreground of two grids: harmonic mean of
/// |skel(P) ∩ R| / |skel(P)| and |skel(R) ∩ P| / |skel(R)|.
pub fn cl_dice(reference: &LabelMap, prediction: &LabelMap) -> Result<f64> {
    if reference.shape() != prediction.shape() {
        return Err(Error::invalid("clDice: shape mismatch"));
    }
    let r = reference.foreground();
    let p = prediction.foreground();
    let sr = skeletonize(reference.shape(), &r);
    let sp = skeletonize(prediction.shape(), &p);
    let tprec = ratio(
        sp.iter().zip(&r).filter(|(s, m)| **s && **m).count() as f64,
        sp.iter().filter(|s| **s).count() as f64,
        "clDice: empty prediction skeleton",
    )?;
    let tsens = ratio(
        sr.iter().zip(&p).filter(|(s, m)| **s && **m).count() as f64,
        sr.iter().filter(|s| **s).count() as f64,
        "clDice: empty reference skeleton",
    )?;
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}
