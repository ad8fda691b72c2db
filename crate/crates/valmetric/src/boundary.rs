//! Boundary extraction and distance-based segmentation metrics.
//!
//! Boundaries use face adjacency: a foreground pixel is on the boundary when
//! a face neighbour is background or outside the grid. Distances are in
//! physical units (grid spacing). Nearest distances come from an exact
//! Euclidean distance transform when both sets live on the same grid, and
//! from brute force otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabelMap;

pub const CONNECTIVITY: &str = "face";

/// Boundary points of one mask, in physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySet {
    pub points: Vec<Vec<f64>>,
    /// Source grid (shape, spacing, flat indices); absent for free point clouds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRef {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub indices: Vec<usize>,
}

impl BoundarySet {
    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        Self { points, grid: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn coords(shape: &[usize], mut idx: usize) -> Vec<usize> {
    let mut c = vec![0; shape.len()];
    for ax in (0..shape.len()).rev() {
        c[ax] = idx % shape[ax];
        idx /= shape[ax];
    }
    c
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        s[ax] = s[ax + 1] * shape[ax + 1];
    }
    s
}

/// Foreground pixels with a background or out-of-grid face neighbour.
pub fn boundary_mask(shape: &[usize], mask: &[bool]) -> Vec<bool> {
    let st = strides(shape);
    let mut out = vec![false; mask.len()];
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let c = coords(shape, i);
        out[i] = (0..shape.len()).any(|ax| {
            c[ax] == 0 || c[ax] + 1 == shape[ax] || !mask[i - st[ax]] || !mask[i + st[ax]]
        });
    }
    out
}

/// Boundary of one class of a label map.
pub fn extract_boundary(map: &LabelMap, class: u16) -> BoundarySet {
    boundary_of_mask(map.shape(), map.spacing(), &map.mask_of(class))
}

pub fn boundary_of_mask(shape: &[usize], spacing: &[f64], mask: &[bool]) -> BoundarySet {
    let b = boundary_mask(shape, mask);
    let indices: Vec<usize> = (0..b.len()).filter(|&i| b[i]).collect();
    let points = indices
        .iter()
        .map(|&i| coords(shape, i).iter().zip(spacing).map(|(&c, &s)| c as f64 * s).collect())
        .collect();
    BoundarySet { points, grid: Some(GridRef { shape: shape.to_vec(), spacing: spacing.to_vec(), indices }) }
}

/// 1D squared distance transform along a line (lower envelope of parabolas).
fn edt_line(f: &[f64], step: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    let x = |q: usize| q as f64 * step;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + x(q) * x(q)) - (f[p] + x(p) * x(p))) / (2.0 * (x(q) - x(p)));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for q in 0..n {
        while z[k + 1] < x(q) {
            k += 1;
        }
        let d = x(q) - x(v[k]);
        out[q] = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance from every pixel to the nearest seed, honouring
/// spacing. Infinite everywhere when there are no seeds.
pub fn distance_transform(shape: &[usize], spacing: &[f64], seeds: &[bool]) -> Vec<f64> {
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let st = strides(shape);
    let n = d.len();
    for ax in 0..shape.len() {
        let len = shape[ax];
        let mut line = vec![0.0; len];
        let mut out = vec![0.0; len];
        for start in 0..n {
            if !(start / st[ax]).is_multiple_of(len) {
                continue;
            }
            for k in 0..len {
                line[k] = d[start + k * st[ax]];
            }
            edt_line(&line, spacing[ax], &mut out);
            for k in 0..len {
                d[start + k * st[ax]] = out[k];
            }
        }
    }
    d.iter_mut().for_each(|x| *x = x.sqrt());
    d
}

fn same_grid(a: &BoundarySet, b: &BoundarySet) -> Option<(Vec<usize>, Vec<f64>)> {
    match (&a.grid, &b.grid) {
        (Some(x), Some(y)) if x.shape == y.shape && x.spacing == y.spacing => Some((x.shape.clone(), x.spacing.clone())),
        _ => None,
    }
}

fn brute_directed(a: &BoundarySet, b: &BoundarySet) -> Vec<f64> {
    a.points
        .iter()
        .map(|p| {
            b.points
                .iter()
                .map(|q| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Distance from each point of `a` to the nearest point of `b`.
pub fn directed_distances(a: &BoundarySet, b: &BoundarySet) -> Vec<f64> {
    match same_grid(a, b) {
        Some((shape, spacing)) => {
            let gb = b.grid.as_ref().unwrap();
            let mut seeds = vec![false; shape.iter().product()];
            for &i in &gb.indices {
                seeds[i] = true;
            }
            let dt = distance_transform(&shape, &spacing, &seeds);
            a.grid.as_ref().unwrap().indices.iter().map(|&i| dt[i]).collect()
        }
        None => brute_directed(a, b),
    }
}

fn both(a: &BoundarySet, b: &BoundarySet) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::undefined("empty boundary"));
    }
    if a.points[0].len() != b.points[0].len() {
        return Err(Error::invalid("boundary dimensionality mismatch"));
    }
    Ok((directed_distances(a, b), directed_distances(b, a)))
}

/// Linear-interpolated percentile (numpy default) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (rank - lo as f64)
}

/// Hausdorff distance; with `percentile` the given percentile of the pooled
/// directed nearest-distance lists (95 gives HD95).
pub fn hausdorff(a: &BoundarySet, b: &BoundarySet, pct: Option<f64>) -> Result<f64> {
    let (ab, ba) = both(a, b)?;
    match pct {
        None => Ok(ab.iter().chain(&ba).copied().fold(0.0, f64::max)),
        Some(p) if p > 0.0 && p <= 100.0 => {
            let pooled: Vec<f64> = ab.into_iter().chain(ba).collect();
            Ok(percentile(&pooled, p))
        }
        Some(p) => Err(Error::invalid(format!("percentile {p} outside (0,100]"))),
    }
}

/// Average symmetric surface distance: mean of both directed lists concatenated.
pub fn assd(a: &BoundarySet, b: &BoundarySet) -> Result<f64> {
    let (ab, ba) = both(a, b)?;
    Ok((ab.iter().sum::<f64>() + ba.iter().sum::<f64>()) / (ab.len() + ba.len()) as f64)
}

pub const MASD_FACTOR: f64 = 0.5;

/// Mean average surface distance: `factor` × (mean_A + mean_B); 0.5 by default.
pub fn masd(a: &BoundarySet, b: &BoundarySet, factor: f64) -> Result<f64> {
    let (ab, ba) = both(a, b)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(factor * (mean(&ab) + mean(&ba)))
}

/// Normalized surface distance with per-point tolerance test d ≤ τ.
pub fn nsd(a: &BoundarySet, b: &BoundarySet, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("tolerance {tau} must be non-negative")));
    }
    let (ab, ba) = both(a, b)?;
    let hit = ab.iter().chain(&ba).filter(|&&d| d <= tau).count();
    Ok(hit as f64 / (ab.len() + ba.len()) as f64)
}

/// Pixels of `mask` closer than `width` to the mask's own boundary.
fn band(shape: &[usize], spacing: &[f64], mask: &[bool], width: f64) -> Vec<bool> {
    let b = boundary_mask(shape, mask);
    let dt = distance_transform(shape, spacing, &b);
    mask.iter().zip(&dt).map(|(&m, &d)| m && d < width).collect()
}

/// Boundary IoU on the foreground of two grids with band width `width`
/// (physical units; pixels at unit spacing).
pub fn boundary_iou(reference: &LabelMap, prediction: &LabelMap, width: f64) -> Result<f64> {
    if reference.shape() != prediction.shape() {
        return Err(Error::invalid("boundary IoU: shape mismatch"));
    }
    if !(width >= 1.0) {
        return Err(Error::invalid(format!("boundary width {width} below 1")));
    }
    let shape = reference.shape();
    let gr = band(shape, reference.spacing(), &reference.foreground(), width);
    let gp = band(shape, prediction.spacing(), &prediction.foreground(), width);
    let inter = gr.iter().zip(&gp).filter(|(a, b)| **a && **b).count();
    let union = gr.iter().zip(&gp).filter(|(a, b)| **a || **b).count();
    if union == 0 {
        return Err(Error::undefined("boundary IoU: both boundary bands are empty"));
    }
    Ok(inter as f64 / union as f64)
}

/// Number of 8/26-connected foreground components.
pub fn connected_components(shape: &[usize], mask: &[bool]) -> usize {
    let d = shape.len();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let o = (k % 3) as i64 - 1;
                    k /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&x| x != 0))
        .collect();
    let st = strides(shape);
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let c = coords(shape, i);
            'next: for o in &offsets {
                let mut j = 0usize;
                for ax in 0..d {
                    let x = c[ax] as i64 + o[ax];
                    if x < 0 || x >= shape[ax] as i64 {
                        continue 'next;
                    }
                    j += x as usize * st[ax];
                }
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}
