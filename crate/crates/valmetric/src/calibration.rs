//! Proper scores and calibration-error estimators.
//!
//! For two classes, the binned ECE and the class-wise CE both look at the
//! positive-class score (index 1), so the two coincide. For more classes the
//! binned ECE is the top-label estimator.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_samples, ScoredSample};

pub const NLL_EPSILON: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 10;
/// Pairs are evaluated on at most this many evenly strided points when
/// choosing the KDE bandwidth or the KCE kernel scale.
pub const TUNING_SUBSAMPLE: usize = 1000;
pub const KDE_BANDWIDTH_GRID: [f64; 12] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];

fn sq_error(s: &ScoredSample) -> f64 {
    s.scores
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let y = (k == s.reference) as u8 as f64;
            (p - y) * (p - y)
        })
        .sum()
}

/// Mean squared distance between score vector and one-hot reference;
/// halved when `normalize` so the range is [0, 1].
pub fn brier_score(samples: &[ScoredSample], normalize: bool) -> Result<f64> {
    check_samples(samples)?;
    let bs = samples.iter().map(sq_error).sum::<f64>() / samples.len() as f64;
    Ok(if normalize { bs / 2.0 } else { bs })
}

/// Root Brier score, an upper bound on the canonical ℓ2 calibration error.
pub fn root_brier_score(samples: &[ScoredSample]) -> Result<f64> {
    brier_score(samples, false).map(f64::sqrt)
}

/// 1 − BS / BS of a model that always predicts the empirical class frequencies.
pub fn brier_skill_score(samples: &[ScoredSample]) -> Result<f64> {
    let c = check_samples(samples)?;
    let n = samples.len() as f64;
    let mut freq = vec![0.0; c];
    for s in samples {
        freq[s.reference] += 1.0 / n;
    }
    let naive: f64 = samples
        .iter()
        .map(|s| (0..c).map(|k| (freq[k] - (k == s.reference) as u8 as f64).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n;
    if naive == 0.0 {
        return Err(Error::undefined("Brier skill score: only one class present"));
    }
    Ok(1.0 - brier_score(samples, false)? / naive)
}

/// Mean −ln(score of the reference class), scores floored at `eps`.
pub fn nll(samples: &[ScoredSample], eps: f64) -> Result<f64> {
    check_samples(samples)?;
    Ok(samples.iter().map(|s| -s.scores[s.reference].max(eps).ln()).sum::<f64>() / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinStrategy {
    EqualWidth,
    EqualFrequency,
}

/// Partition of [0, 1]; the last bin is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub edges: Vec<f64>,
    pub strategy: BinStrategy,
}

impl BinningScheme {
    pub fn equal_width(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("bin count must be positive"));
        }
        let edges = (0..=m).map(|k| k as f64 / m as f64).collect();
        Ok(Self { edges, strategy: BinStrategy::EqualWidth })
    }

    /// Quantile edges of `values`; duplicate edges are merged.
    pub fn equal_frequency(values: &[f64], m: usize) -> Result<Self> {
        if m == 0 || values.is_empty() {
            return Err(Error::invalid("equal-frequency binning needs values and a positive bin count"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mut edges = vec![0.0];
        for k in 1..m {
            let e = v[k * v.len() / m];
            if e > *edges.last().unwrap() && e < 1.0 {
                edges.push(e);
            }
        }
        edges.push(1.0);
        Ok(Self { edges, strategy: BinStrategy::EqualFrequency })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.edges.len() >= 2
            && self.edges[0] == 0.0
            && *self.edges.last().unwrap() == 1.0
            && self.edges.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("bin edges must increase strictly from 0 to 1"))
        }
    }

    pub fn index(&self, x: f64) -> usize {
        let m = self.bins();
        if self.strategy == BinStrategy::EqualWidth {
            return ((x * m as f64).floor() as usize).min(m - 1);
        }
        self.edges[1..m].iter().take_while(|&&e| x >= e).count()
    }
}

/// One reliability-diagram bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: f64,
    pub accuracy: f64,
}

/// Binned ℓ1 gap for (confidence, hit) pairs; also returns the bins.
fn binned_gap(pairs: &[(f64, f64)], b: &BinningScheme) -> (f64, Vec<ReliabilityBin>) {
    let m = b.bins();
    let mut cnt = vec![0usize; m];
    let mut conf = vec![0.0; m];
    let mut hit = vec![0.0; m];
    for &(c, h) in pairs {
        let k = b.index(c);
        cnt[k] += 1;
        conf[k] += c;
        hit[k] += h;
    }
    let n = pairs.len() as f64;
    let mut gap = 0.0;
    let mut bins = Vec::with_capacity(m);
    for k in 0..m {
        let (mc, ma) = if cnt[k] > 0 { (conf[k] / cnt[k] as f64, hit[k] / cnt[k] as f64) } else { (0.0, 0.0) };
        gap += cnt[k] as f64 / n * (mc - ma).abs();
        bins.push(ReliabilityBin { lower: b.edges[k], upper: b.edges[k + 1], count: cnt[k], confidence: mc, accuracy: ma });
    }
    (gap, bins)
}

/// (confidence, correct) pairs used by the binned ECE.
fn ece_pairs(samples: &[ScoredSample], c: usize) -> Vec<(f64, f64)> {
    if c == 2 {
        samples.iter().map(|s| (s.scores[1], (s.reference == 1) as u8 as f64)).collect()
    } else {
        samples
            .iter()
            .map(|s| {
                let a = s.argmax();
                (s.scores[a], (a == s.reference) as u8 as f64)
            })
            .collect()
    }
}

/// Binned expected calibration error with reliability bins.
pub fn reliability_diagram(samples: &[ScoredSample], binning: &BinningScheme) -> Result<(f64, Vec<ReliabilityBin>)> {
    let c = check_samples(samples)?;
    binning.validate()?;
    Ok(binned_gap(&ece_pairs(samples, c), binning))
}

pub fn ece_binned(samples: &[ScoredSample], binning: &BinningScheme) -> Result<f64> {
    reliability_diagram(samples, binning).map(|r| r.0)
}

pub fn reliability_csv(bins: &[ReliabilityBin]) -> String {
    let mut s = String::from("lower,upper,count,confidence,accuracy\n");
    for b in bins {
        s.push_str(&format!("{},{},{},{},{}\n", b.lower, b.upper, b.count, b.confidence, b.accuracy));
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CwceWeighting {
    Uniform,
    ImportanceWeights(Vec<f64>),
    PerClassReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CwceResult {
    pub value: f64,
    #[serde(rename = "per-class")]
    pub per_class: BTreeMap<usize, f64>,
}

/// Class-wise binned CE. Binary tasks use the positive class only.
pub fn cwce(samples: &[ScoredSample], binning: &BinningScheme, weighting: &CwceWeighting) -> Result<CwceResult> {
    let c = check_samples(samples)?;
    binning.validate()?;
    let classes: Vec<usize> = if c == 2 { vec![1] } else { (0..c).collect() };
    let mut per_class = BTreeMap::new();
    for &k in &classes {
        let pairs: Vec<(f64, f64)> =
            samples.iter().map(|s| (s.scores[k], (s.reference == k) as u8 as f64)).collect();
        per_class.insert(k, binned_gap(&pairs, binning).0);
    }
    let value = match weighting {
        CwceWeighting::Uniform | CwceWeighting::PerClassReport => {
            per_class.values().sum::<f64>() / per_class.len() as f64
        }
        CwceWeighting::ImportanceWeights(w) => {
            if w.len() != c || w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::invalid("importance weights: one non-negative weight per class"));
            }
            let total: f64 = classes.iter().map(|&k| w[k]).sum();
            if total <= 0.0 {
                return Err(Error::invalid("importance weights sum to zero"));
            }
            classes.iter().map(|&k| w[k] * per_class[&k]).sum::<f64>() / total
        }
    };
    Ok(CwceResult { value, per_class })
}

/// Canonical, class-wise and top-label ℓ1 CE estimates on one shared
/// partition: cells keyed by (argmax, bin of every class score). Class-wise
/// here sums over classes. Canonical dominates both others by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedPartitionCe {
    pub canonical: f64,
    pub classwise: f64,
    pub toplabel: f64,
}

pub fn shared_partition_ce(samples: &[ScoredSample], binning: &BinningScheme) -> Result<SharedPartitionCe> {
    let c = check_samples(samples)?;
    binning.validate()?;
    let n = samples.len() as f64;
    let mut cells: BTreeMap<Vec<usize>, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for s in samples {
        let mut key = vec![s.argmax()];
        key.extend(s.scores.iter().map(|&x| binning.index(x)));
        let e = cells.entry(key).or_insert_with(|| (0.0, vec![0.0; c], vec![0.0; c]));
        e.0 += 1.0;
        for k in 0..c {
            e.1[k] += s.scores[k];
            e.2[k] += (s.reference == k) as u8 as f64;
        }
    }
    let canonical = cells
        .values()
        .map(|(cnt, sc, hit)| (0..c).map(|k| (sc[k] - hit[k]).abs()).sum::<f64>() / cnt * cnt / n)
        .sum();
    let mut classwise = 0.0;
    for k in 0..c {
        let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.scores[k], (s.reference == k) as u8 as f64)).collect();
        classwise += binned_gap(&pairs, binning).0;
    }
    let top: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let a = s.argmax();
            (s.scores[a], (a == s.reference) as u8 as f64)
        })
        .collect();
    Ok(SharedPartitionCe { canonical, classwise, toplabel: binned_gap(&top, binning).0 })
}

fn strided_subsample(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        (0..n).collect()
    } else {
        (0..cap).map(|k| k * n / cap).collect()
    }
}

struct KdeInputs {
    log_s: Vec<Vec<f64>>,
    scores: Vec<Vec<f64>>,
}

impl KdeInputs {
    fn new(samples: &[ScoredSample]) -> Self {
        let scores: Vec<Vec<f64>> = samples.iter().map(|s| s.scores.iter().map(|&x| x.max(NLL_EPSILON)).collect()).collect();
        let log_s = scores.iter().map(|v| v.iter().map(|x| x.ln()).collect()).collect();
        Self { log_s, scores }
    }

    /// Log Dirichlet kernel (α = s_i/h + 1) at point j, without the
    /// Γ(Σα) term, which is the same for every i.
    fn log_kernel(&self, i: usize, j: usize, h: f64, norm_i: f64) -> f64 {
        self.scores[i].iter().zip(&self.log_s[j]).map(|(s, l)| s / h * l).sum::<f64>() - norm_i
    }

    fn norm(&self, i: usize, h: f64) -> f64 {
        self.scores[i].iter().map(|s| libm::lgamma(s / h + 1.0)).sum()
    }
}

/// Leave-one-out estimates of E[Y | s_j] for the points `rows`, using all samples as kernel centres.
fn loo_conditionals(samples: &[ScoredSample], kd: &KdeInputs, h: f64, rows: &[usize], c: usize) -> Vec<Vec<f64>> {
    let n = samples.len();
    let norms: Vec<f64> = (0..n).map(|i| kd.norm(i, h)).collect();
    rows.par_iter()
        .map(|&j| {
            let logs: Vec<f64> =
                (0..n).map(|i| if i == j { f64::NEG_INFINITY } else { kd.log_kernel(i, j, h, norms[i]) }).collect();
            let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut yhat = vec![0.0; c];
            let mut z = 0.0;
            for (i, &l) in logs.iter().enumerate() {
                if i != j {
                    let w = (l - m).exp();
                    yhat[samples[i].reference] += w;
                    z += w;
                }
            }
            yhat.iter().map(|y| y / z).collect()
        })
        .collect()
}

/// Bandwidth maximizing the leave-one-out log-likelihood of the labels under
/// the kernel estimate of E[Y | s], over a fixed grid. When tuned on a
/// subsample of m out of n points, the winner is scaled by (m/n)^(1/(d+4)),
/// d = C − 1, the usual kernel rate.
pub fn select_bandwidth(samples: &[ScoredSample]) -> Result<f64> {
    let c = check_samples(samples)?;
    let idx = strided_subsample(samples.len(), TUNING_SUBSAMPLE);
    let sub: Vec<ScoredSample> = idx.iter().map(|&i| samples[i].clone()).collect();
    let kd = KdeInputs::new(&sub);
    let rows: Vec<usize> = (0..sub.len()).collect();
    let mut best = (f64::NEG_INFINITY, KDE_BANDWIDTH_GRID[0]);
    for &h in &KDE_BANDWIDTH_GRID {
        let yhat = loo_conditionals(&sub, &kd, h, &rows, c);
        let ll: f64 = rows.iter().map(|&j| yhat[j][sub[j].reference].max(NLL_EPSILON).ln()).sum();
        if ll > best.0 {
            best = (ll, h);
        }
    }
    let d = (c - 1) as f64;
    Ok(best.1 * (sub.len() as f64 / samples.len() as f64).powf(1.0 / (d + 4.0)))
}

/// Kernel-density estimate of the canonical ℓp calibration error,
/// (mean ‖ŷ − s‖_p^p)^{1/p}, with leave-one-out Dirichlet-kernel estimates ŷ
/// of E[Y | s]. Returns (estimate, bandwidth used).
pub fn ece_kde(samples: &[ScoredSample], p: u32, bandwidth: Option<f64>) -> Result<(f64, f64)> {
    let c = check_samples(samples)?;
    if samples.len() < 10 {
        return Err(Error::invalid("ECE-KDE needs at least 10 samples"));
    }
    if p != 1 && p != 2 {
        return Err(Error::invalid("ECE-KDE supports p = 1 or 2"));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth {h} must be positive"))),
        None => select_bandwidth(samples)?,
    };
    let kd = KdeInputs::new(samples);
    let n = samples.len();
    let rows: Vec<usize> = (0..n).collect();
    let yhat = loo_conditionals(samples, &kd, h, &rows, c);
    let total: f64 = (0..n)
        .map(|j| (0..c).map(|k| (yhat[j][k] - samples[j].scores[k]).abs().powi(p as i32)).sum::<f64>())
        .sum();
    Ok(((total / n as f64).powf(1.0 / p as f64), h))
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Median pairwise ℓ1 distance over a strided subsample; 1 when it is 0.
pub fn kce_scale(samples: &[ScoredSample]) -> f64 {
    let idx = strided_subsample(samples.len(), TUNING_SUBSAMPLE);
    let mut d = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(l1(&samples[i].scores, &samples[j].scores));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Unbiased kernel calibration error with k(s, s') = exp(−‖s − s'‖₁/σ)·I.
/// Can be negative. Returns (estimate, σ).
pub fn kce(samples: &[ScoredSample], scale: Option<f64>) -> Result<(f64, f64)> {
    let c = check_samples(samples)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("KCE needs at least two samples"));
    }
    let sigma = match scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::invalid(format!("kernel scale {s} must be positive"))),
        None => kce_scale(samples),
    };
    let resid: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| (0..c).map(|k| (k == s.reference) as u8 as f64 - s.scores[k]).collect())
        .collect();
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in i + 1..n {
                let k = (-l1(&samples[i].scores, &samples[j].scores) / sigma).exp();
                acc += k * resid[i].iter().zip(&resid[j]).map(|(a, b)| a * b).sum::<f64>();
            }
            acc
        })
        .sum();
    Ok((2.0 * total / (n as f64 * (n - 1) as f64), sigma))
}
