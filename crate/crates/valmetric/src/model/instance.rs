use serde::{Deserialize, Serialize};

use super::LabelMap;
use crate::error::{Error, Result};

/// Where an object is: an image-shaped binary mask, an axis-aligned box, or a point.
/// Box and point coordinates are in pixel-index units along the grid axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Mask(LabelMap),
    Box { min: Vec<f64>, max: Vec<f64> },
    Point(Vec<f64>),
}

/// One reference or predicted object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub class: u32,
    #[serde(flatten)]
    pub location: Location,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Instance {
    pub fn new(class: u32, location: Location) -> Self {
        Self { class, location, score: None }
    }

    pub fn with_score(mut self, s: f64) -> Self {
        self.score = Some(s);
        self
    }

    pub fn n_dims(&self) -> usize {
        match &self.location {
            Location::Mask(m) => m.shape().len(),
            Location::Box { min, .. } => min.len(),
            Location::Point(p) => p.len(),
        }
    }

    /// Object size: foreground pixel count, box volume, or 0 for points.
    pub fn size(&self) -> f64 {
        match &self.location {
            Location::Mask(m) => m.values().iter().filter(|&&v| v != 0).count() as f64,
            Location::Box { min, max } => min.iter().zip(max).map(|(a, b)| b - a).product(),
            Location::Point(_) => 0.0,
        }
    }
}

/// Check masks against the image shape, box ordering and score range.
pub fn validate_instances(instances: &[Instance], shape: Option<&[usize]>) -> Result<()> {
    for (i, inst) in instances.iter().enumerate() {
        if let Some(s) = inst.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!("instance {i}: score {s} outside [0,1]")));
            }
        }
        match &inst.location {
            Location::Mask(m) => {
                if let Some(shape) = shape {
                    if m.shape() != shape {
                        return Err(Error::invalid(format!(
                            "instance {i}: mask shape {:?} differs from image shape {shape:?}",
                            m.shape()
                        )));
                    }
                }
            }
            Location::Box { min, max } => {
                if min.len() != max.len() || min.is_empty() {
                    return Err(Error::invalid(format!("instance {i}: box corners differ in dimension")));
                }
                if min.iter().zip(max).any(|(a, b)| !(a <= b)) {
                    return Err(Error::invalid(format!("instance {i}: box min exceeds max")));
                }
            }
            Location::Point(p) => {
                if p.is_empty() || p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("instance {i}: bad point coordinates")));
                }
            }
        }
    }
    Ok(())
}
