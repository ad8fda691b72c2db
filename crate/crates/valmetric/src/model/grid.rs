use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense 2D/3D grid of class indices (0 = background) with physical spacing.
///
/// JSON form: `{"shape": [..], "values": nested arrays}` or
/// `{"shape": [..], "data": base64 of little-endian u16}`; `spacing` optional.
/// Serialization always writes the base64 form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct LabelMap {
    shape: Vec<usize>,
    values: Vec<u16>,
    spacing: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing: Option<Vec<f64>>,
}

fn flatten_nested(v: &serde_json::Value, depth: usize, shape: &[usize], out: &mut Vec<u16>) -> Result<()> {
    if depth == shape.len() {
        let x = v
            .as_u64()
            .filter(|x| *x <= u16::MAX as u64)
            .ok_or_else(|| Error::Schema(format!("grid entry {v} is not a u16 class index")))?;
        out.push(x as u16);
        return Ok(());
    }
    let arr = v
        .as_array()
        .ok_or_else(|| Error::Schema(format!("expected nested array at depth {depth}")))?;
    if arr.len() != shape[depth] {
        return Err(Error::Schema(format!(
            "axis {depth} has {} entries, shape says {}",
            arr.len(),
            shape[depth]
        )));
    }
    for x in arr {
        flatten_nested(x, depth + 1, shape, out)?;
    }
    Ok(())
}

impl TryFrom<RawGrid> for LabelMap {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        let values = match (raw.values, raw.data) {
            (Some(v), None) => {
                let mut out = Vec::new();
                flatten_nested(&v, 0, &raw.shape, &mut out)?;
                out
            }
            (None, Some(d)) => {
                let bytes = B64.decode(d.as_bytes()).map_err(|e| Error::Schema(format!("bad base64: {e}")))?;
                if bytes.len() % 2 != 0 {
                    return Err(Error::Schema("raw grid byte count is odd".into()));
                }
                bytes.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect()
            }
            _ => return Err(Error::Schema("grid needs exactly one of \"values\" or \"data\"".into())),
        };
        LabelMap::new(raw.shape, values, raw.spacing)
    }
}

impl From<LabelMap> for RawGrid {
    fn from(m: LabelMap) -> Self {
        let bytes: Vec<u8> = m.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        RawGrid { shape: m.shape, values: None, data: Some(B64.encode(bytes)), spacing: Some(m.spacing) }
    }
}

impl LabelMap {
    pub fn new(shape: Vec<usize>, values: Vec<u16>, spacing: Option<Vec<f64>>) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) || shape.contains(&0) {
            return Err(Error::invalid(format!("grid shape {shape:?} must have 2 or 3 positive extents")));
        }
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::invalid(format!("{} values for shape {shape:?} ({n} expected)", values.len())));
        }
        let spacing = spacing.unwrap_or_else(|| vec![1.0; shape.len()]);
        if spacing.len() != shape.len() || spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("spacing must give one positive size per axis"));
        }
        Ok(Self { shape, values, spacing })
    }

    /// Binary grid from a boolean mask.
    pub fn from_mask(shape: Vec<usize>, mask: &[bool], spacing: Option<Vec<f64>>) -> Result<Self> {
        Self::new(shape, mask.iter().map(|&b| b as u16).collect(), spacing)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_class(&self) -> u16 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Reject class indices above `c` (foreground classes are 1..=c).
    pub fn check_classes(&self, c: u16) -> Result<()> {
        match self.values.iter().find(|&&v| v > c) {
            Some(v) => Err(Error::invalid(format!("class index {v} exceeds class count {c}"))),
            None => Ok(()),
        }
    }

    /// One-vs-rest mask of `class`.
    pub fn mask_of(&self, class: u16) -> Vec<bool> {
        self.values.iter().map(|&v| v == class).collect()
    }

    /// Nonzero pixels.
    pub fn foreground(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0).collect()
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.shape.len()];
        for ax in (0..self.shape.len()).rev() {
            c[ax] = idx % self.shape[ax];
            idx /= self.shape[ax];
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.shape).fold(0, |acc, (&c, &s)| acc * s + c)
    }

    /// Physical length of the grid diagonal; the worst value for distance metrics.
    pub fn diagonal(&self) -> f64 {
        self.shape
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &s)| (n as f64 * s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
