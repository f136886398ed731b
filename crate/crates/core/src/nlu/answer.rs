use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MatchResult, MatchStrength};
use crate::knowledge::KnowledgeBase;

/// Opening words of every hedged answer.
pub const HEDGE_MARKER: &str = "I could not verify";

const HEDGE_OPEN: &str = "I could not verify the following: ";
const HEDGE_JOIN: &str = "; ";
const HEDGE_CLOSE: &str = ". What I do know: ";
const SLOT_OPEN: &str = ": ";
const SLOT_SEP: &str = " ";
const SLOT_JOIN: &str = "; ";
const SLOT_CLOSE: &str = ".";

/// Every fixed string an answer may contain besides fact-sheet material.
pub const TEMPLATE_STRINGS: &[&str] = &[
    HEDGE_OPEN, HEDGE_JOIN, HEDGE_CLOSE, SLOT_OPEN, SLOT_SEP, SLOT_JOIN, SLOT_CLOSE,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentSource {
    /// Fixed template text.
    Template,
    /// Copied verbatim from the matched fact sheet.
    Sheet,
    /// Names a query constraint the sheet could not verify.
    Query,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSegment {
    pub source: SegmentSource,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAnswer {
    pub text: String,
    pub hedged: bool,
    pub sheet: String,
    pub segments: Vec<AnswerSegment>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnswerError {
    #[error("match has no answerable fact sheet")]
    NoAnswerableMatch,
}

struct Builder(Vec<AnswerSegment>);

impl Builder {
    fn push(&mut self, source: SegmentSource, text: impl Into<String>) {
        let text = text.into();
        if !text.is_empty() {
            self.0.push(AnswerSegment { source, text });
        }
    }
}

/// Renders a rule answer from the matched sheet. Conclusive matches return
/// the sheet's `answer_text` (or a slot listing); Supportive matches prefix
/// the same content with a hedge naming each unverifiable constraint.
pub fn formulate_answer(m: &MatchResult, kb: &KnowledgeBase) -> Result<RuleAnswer, AnswerError> {
    if m.strength == MatchStrength::None {
        return Err(AnswerError::NoAnswerableMatch);
    }
    let sheet = m
        .sheet
        .as_ref()
        .and_then(|id| kb.factsheets.get(id))
        .ok_or(AnswerError::NoAnswerableMatch)?;

    let mut b = Builder(Vec::new());
    let hedged = m.strength == MatchStrength::Supportive;
    if hedged {
        b.push(SegmentSource::Template, HEDGE_OPEN);
        for (i, c) in m.unverifiable.iter().enumerate() {
            if i > 0 {
                b.push(SegmentSource::Template, HEDGE_JOIN);
            }
            b.push(SegmentSource::Query, c.to_string());
        }
        b.push(SegmentSource::Template, HEDGE_CLOSE);
    }
    match &sheet.answer_text {
        Some(text) => b.push(SegmentSource::Sheet, text.clone()),
        None => {
            b.push(SegmentSource::Sheet, sheet.label.clone());
            for (i, (slot, value)) in sheet.slots.iter().enumerate() {
                b.push(SegmentSource::Template, if i == 0 { SLOT_OPEN } else { SLOT_JOIN });
                b.push(SegmentSource::Sheet, slot.clone());
                b.push(SegmentSource::Template, SLOT_SEP);
                b.push(SegmentSource::Sheet, value.to_string());
            }
            b.push(SegmentSource::Template, SLOT_CLOSE);
        }
    }

    let segments = b.0;
    Ok(RuleAnswer {
        text: segments.iter().map(|s| s.text.as_str()).collect(),
        hedged,
        sheet: sheet.id.clone(),
        segments,
    })
}
