//! Shared synthetic generators and oracles for integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use valmetric::model::ScoredSample;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flat Dirichlet draw via normalized exponentials.
pub fn dirichlet_flat(r: &mut impl Rng, c: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..c).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|x| x / s).collect()
}

pub fn draw_label(r: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (k, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

/// Labels drawn from the score vector itself: calibrated by construction.
pub fn calibrated(seed: u64, n: usize, c: usize) -> Vec<ScoredSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let p = dirichlet_flat(&mut r, c);
            let y = draw_label(&mut r, &p);
            ScoredSample::new(p, y)
        })
        .collect()
}

/// Labels from the original scores, reported scores squared and renormalized.
pub fn overconfident(seed: u64, n: usize, c: usize) -> Vec<ScoredSample> {
    calibrated(seed, n, c)
        .into_iter()
        .map(|s| {
            let sq: Vec<f64> = s.scores.iter().map(|x| x * x).collect();
            let z: f64 = sq.iter().sum();
            ScoredSample::new(sq.into_iter().map(|x| x / z).collect(), s.reference)
        })
        .collect()
}

/// Fixture with class-wise and top-label CE of zero but canonical CE > 0.
pub fn ce_levels_fixture() -> Vec<ScoredSample> {
    let vecs = [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]];
    // true conditionals (.5,.5,0), (0,.5,.5), (.5,0,.5): 8 copies, labels split 4/4
    let labels = [[0, 1], [1, 2], [0, 2]];
    let mut out = Vec::new();
    for (v, l) in vecs.iter().zip(labels) {
        for k in 0..8 {
            out.push(ScoredSample::new(v.to_vec(), l[k % 2]));
        }
    }
    out
}
