//! Shared domain types. All of them are plain values: build once, share freely.

mod confusion;
mod fingerprint;
mod grid;
mod instance;
mod result;
mod sample;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use confusion::{confusion_from_labels, confusion_from_maps, BinaryCounts, ConfusionMatrix};
pub use fingerprint::{item_spec, Answer, Domain, Fingerprint, ItemSpec, ITEMS};
pub use grid::LabelMap;
pub use instance::{validate_instances, Instance, Location};
pub use result::{MetricResult, Value};
pub use sample::ScoredSample;
pub(crate) use sample::check_samples;

use crate::error::{Error, Result};

/// The four problem categories. Serialized as their acronyms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProblemCategory {
    ImLC,
    SemS,
    ObD,
    InS,
}

impl ProblemCategory {
    pub const ALL: [ProblemCategory; 4] = [Self::ImLC, Self::SemS, Self::ObD, Self::InS];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ImLC => "ImLC",
            Self::SemS => "SemS",
            Self::ObD => "ObD",
            Self::InS => "InS",
        }
    }

    /// Object-level categories have no true negatives.
    pub fn is_object_level(self) -> bool {
        matches!(self, Self::ObD | Self::InS)
    }

    /// Smallest admissible class count (ImLC counts all classes, the others
    /// count foreground classes only).
    pub fn min_classes(self) -> u32 {
        if self == Self::ImLC {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ProblemCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown problem category {s:?}")))
    }
}
