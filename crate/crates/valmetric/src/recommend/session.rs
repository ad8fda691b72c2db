//! Question-by-question traversal with an auditable transcript.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{recommend_with, run, DecisionGraph, GuideSpec, Recommendation};
use crate::error::{Error, Result};
use crate::model::{item_spec, Answer, Domain, Fingerprint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TranscriptEntry {
    Answer { item: String, value: Answer },
    Guide { guide: String, option: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuestionDescriptor {
    pub node: String,
    pub item: String,
    pub name: String,
    pub domain: Domain,
    pub prompt: String,
    pub why: String,
    /// Items accepted as the next answer.
    pub accepts: Vec<String>,
    pub subprocess: String,
}

#[derive(Clone, Debug, Default)]
pub struct Session {
    fingerprint: Fingerprint,
    choices: BTreeMap<String, String>,
    transcript: Vec<TranscriptEntry>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start from a partial fingerprint.
    pub fn with_fingerprint(fingerprint: Fingerprint) -> Self {
        Self { fingerprint, ..Self::default() }
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn choices(&self) -> &BTreeMap<String, String> {
        &self.choices
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Next unanswered question on the path, or `None` once traversal completes.
    pub fn next_question(&self, graph: &DecisionGraph) -> Result<Option<QuestionDescriptor>> {
        let r = run(graph, &self.fingerprint, &self.choices)?;
        let Some(b) = r.blocked else { return Ok(None) };
        let spec = item_spec(&b.item).ok_or_else(|| Error::Schema(format!("unknown item {}", b.item)))?;
        let mut accepts = vec![b.item.clone()];
        accepts.extend(b.alternatives.iter().filter(|a| **a != b.item).cloned());
        Ok(Some(QuestionDescriptor {
            subprocess: graph.node(&b.node)?.subprocess.clone(),
            node: b.node,
            item: b.item,
            name: spec.name.into(),
            domain: spec.domain,
            prompt: spec.prompt.into(),
            why: spec.why.into(),
            accepts,
        }))
    }

    /// Guides reached so far and not yet resolved.
    pub fn pending_guides(&self, graph: &DecisionGraph) -> Result<Vec<GuideSpec>> {
        let r = run(graph, &self.fingerprint, &self.choices)?;
        let mut pending = r.pool.pending.clone();
        if r.blocked.is_none() {
            if let Ok(rec) = recommend_with(graph, &self.fingerprint, &self.choices) {
                pending = rec.pool.pending;
            }
        }
        Ok(pending)
    }

    pub fn answer(&mut self, graph: &DecisionGraph, item: &str, value: Answer) -> Result<()> {
        let q = self
            .next_question(graph)?
            .ok_or_else(|| Error::OutOfFrontier(format!("{item}: traversal already complete")))?;
        if !q.accepts.iter().any(|a| a == item) {
            return Err(Error::OutOfFrontier(format!("{item} is not asked now (expected {})", q.accepts.join(" or "))));
        }
        let mut fp = self.fingerprint.clone();
        fp.set(item, value.clone())?;
        // Fail nodes (e.g. too few classes) reject the answer here.
        let r = run(graph, &fp, &self.choices)?;
        if fp.category().is_none() {
            if let Some(c) = r.category {
                fp.set("FP1.1", Answer::Choice(c.as_str().into()))?;
            }
        }
        self.fingerprint = fp;
        self.transcript.push(TranscriptEntry::Answer { item: item.into(), value });
        Ok(())
    }

    pub fn guide(&mut self, graph: &DecisionGraph, guide: &str, option: &str) -> Result<()> {
        let pending = self.pending_guides(graph)?;
        let g = pending
            .iter()
            .find(|g| g.id == guide)
            .ok_or_else(|| Error::OutOfFrontier(format!("guide {guide} is not pending")))?;
        if !g.options.iter().any(|o| o.id == option) {
            return Err(Error::invalid(format!(
                "{guide}: {option:?} is not an option (options: {})",
                g.options.iter().map(|o| o.id.as_str()).collect::<Vec<_>>().join(", ")
            )));
        }
        self.choices.insert(guide.into(), option.into());
        self.transcript.push(TranscriptEntry::Guide { guide: guide.into(), option: option.into() });
        Ok(())
    }

    /// Final pool; unresolved guides stay pending in it.
    pub fn pool(&self, graph: &DecisionGraph) -> Result<Recommendation> {
        recommend_with(graph, &self.fingerprint, &self.choices)
    }

    /// Rebuild a session by replaying a transcript against the graph.
    pub fn replay(graph: &DecisionGraph, transcript: &[TranscriptEntry]) -> Result<Self> {
        let mut s = Self::new();
        for e in transcript {
            match e {
                TranscriptEntry::Answer { item, value } => s.answer(graph, item, value.clone())?,
                TranscriptEntry::Guide { guide, option } => s.guide(graph, guide, option)?,
            }
        }
        Ok(s)
    }
}
