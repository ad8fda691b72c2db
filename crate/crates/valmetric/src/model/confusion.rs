use serde::{Deserialize, Serialize};

use super::LabelMap;
use crate::error::{Error, Result};

/// Binary cardinalities for one positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same matrix seen from the other class.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self { tp: self.tp * k, fp: self.fp * k, fn_: self.fn_ * k, tn: self.tn * k }
    }
}

impl std::ops::Add for BinaryCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

/// C×C counts; entry (i, j) = cases of true class i decided as class j.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    counts: Vec<Vec<u64>>,
    #[serde(default, rename = "class-labels")]
    labels: Vec<String>,
}

impl TryFrom<RawMatrix> for ConfusionMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        let labels = if raw.labels.is_empty() { None } else { Some(raw.labels) };
        ConfusionMatrix::new(raw.counts, labels)
    }
}

impl From<ConfusionMatrix> for RawMatrix {
    fn from(m: ConfusionMatrix) -> Self {
        RawMatrix { counts: m.rows(), labels: m.labels }
    }
}

impl ConfusionMatrix {
    pub fn new(rows: Vec<Vec<u64>>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("confusion matrix needs at least one class"));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        let labels = labels.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if labels.len() != n {
            return Err(Error::invalid("label count differs from class count"));
        }
        Ok(Self { n, counts: rows.into_iter().flatten().collect(), labels })
    }

    /// Binary matrix with class 0 = negative, class 1 = positive.
    pub fn from_binary(c: BinaryCounts) -> Self {
        Self {
            n: 2,
            counts: vec![c.tn, c.fp, c.fn_, c.tp],
            labels: vec!["negative".into(), "positive".into()],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, truth: usize, decided: usize) -> u64 {
        self.counts[truth * self.n + decided]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.n).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    /// One-vs-rest cardinalities for class `k`.
    pub fn one_vs_rest(&self, k: usize) -> BinaryCounts {
        let tp = self.get(k, k);
        let fn_ = self.row_sum(k) - tp;
        let fp = self.col_sum(k) - tp;
        BinaryCounts { tp, fp, fn_, tn: self.total() - tp - fn_ - fp }
    }

    /// TP/FP/FN/TN accessors, only for two-class matrices.
    pub fn binary(&self, positive: usize) -> Result<BinaryCounts> {
        if self.n != 2 || positive > 1 {
            return Err(Error::invalid("binary accessors need a 2×2 matrix and positive class 0 or 1"));
        }
        Ok(self.one_vs_rest(positive))
    }
}

/// Count (reference, prediction) pairs into a C×C matrix.
pub fn confusion_from_labels(reference: &[usize], predicted: &[usize], c: usize) -> Result<ConfusionMatrix> {
    if reference.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} references, {} predictions",
            reference.len(),
            predicted.len()
        )));
    }
    if c == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    let mut counts = vec![0u64; c * c];
    for (&r, &p) in reference.iter().zip(predicted) {
        if r >= c || p >= c {
            return Err(Error::invalid(format!("class index {} out of range 0..{c}", r.max(p))));
        }
        counts[r * c + p] += 1;
    }
    Ok(ConfusionMatrix { n: c, counts, labels: (0..c).map(|i| i.to_string()).collect() })
}

/// One-vs-rest pixel matrix for `class` over a single image.
pub fn confusion_from_maps(reference: &LabelMap, prediction: &LabelMap, class: u16) -> Result<ConfusionMatrix> {
    if reference.shape() != prediction.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            reference.shape(),
            prediction.shape()
        )));
    }
    let mut c = BinaryCounts::default();
    for (&r, &p) in reference.values().iter().zip(prediction.values()) {
        match (r == class, p == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    let mut m = ConfusionMatrix::from_binary(c);
    m.labels = vec!["rest".into(), class.to_string()];
    Ok(m)
}
