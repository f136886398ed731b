use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Prompt, DONT_KNOW};
use crate::nlu::{is_content, Lemmatizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub grounded: bool,
    pub ungrounded_spans: Vec<String>,
}

fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}

/// Every content lemma of `answer` must appear in a context block, the
/// prompt template or the "I don't know" reply. Failing stretches (maximal
/// runs not interrupted by a grounded content word) are returned verbatim.
pub fn check_grounding(answer: &str, prompt: &Prompt, lemmatizer: &Lemmatizer) -> GroundingReport {
    let mut allowed = BTreeSet::new();
    let mut sources: Vec<String> = prompt.context_blocks.iter().map(|b| b.excerpt.clone()).collect();
    sources.push(prompt.fixed_text());
    sources.push(DONT_KNOW.to_string());
    for text in &sources {
        for t in lemmatizer.tokens(text).1 {
            allowed.insert(t.surface);
            allowed.insert(t.lemma);
        }
    }

    let (_, tokens) = lemmatizer.tokens(answer);
    let mut spans = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for t in tokens.iter().filter(|t| is_content(t)) {
        let ok = allowed.contains(&t.lemma) || allowed.contains(&t.surface);
        match (ok, run) {
            (false, None) => run = Some(t.span),
            (false, Some((s, _))) => run = Some((s, t.span.1)),
            (true, Some((s, e))) => {
                spans.push(char_slice(answer, s, e));
                run = None;
            }
            (true, None) => {}
        }
    }
    if let Some((s, e)) = run {
        spans.push(char_slice(answer, s, e));
    }
    GroundingReport { grounded: spans.is_empty(), ungrounded_spans: spans }
}
