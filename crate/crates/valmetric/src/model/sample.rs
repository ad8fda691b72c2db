use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predicted class-score vector for one case plus its reference class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub scores: Vec<f64>,
    pub reference: usize,
    #[serde(rename = "case-id", default)]
    pub case_id: String,
    #[serde(rename = "group-id", default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl ScoredSample {
    pub fn new(scores: Vec<f64>, reference: usize) -> Self {
        Self { scores, reference, case_id: String::new(), group_id: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.is_empty() {
            return Err(Error::invalid("empty score vector"));
        }
        if self.reference >= self.scores.len() {
            return Err(Error::invalid(format!(
                "reference class {} outside {} scores",
                self.reference,
                self.scores.len()
            )));
        }
        if let Some(s) = self.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::invalid(format!("score {s} outside [0,1]")));
        }
        Ok(())
    }

    /// Index of the highest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.scores.iter().enumerate() {
            if s > self.scores[best] {
                best = k;
            }
        }
        best
    }
}

/// Validate a sample set: nonempty, consistent dimension, valid entries.
pub(crate) fn check_samples(samples: &[ScoredSample]) -> Result<usize> {
    let first = samples.first().ok_or_else(|| Error::invalid("empty sample set"))?;
    let c = first.scores.len();
    for s in samples {
        s.validate()?;
        if s.scores.len() != c {
            return Err(Error::invalid("inconsistent score-vector lengths"));
        }
    }
    Ok(c)
}
