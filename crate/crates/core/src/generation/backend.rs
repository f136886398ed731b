use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use thiserror::Error;

use super::Prompt;
use crate::nlu::Lemmatizer;

/// Id under which the built-in extractive backend registers.
pub const MOCK_BACKEND_ID: &str = "mock";

/// Reply of the extractive backend when no sentence overlaps the query.
pub const DONT_KNOW: &str = "I don't know.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out")]
    Timeout,
    #[error("backend returned an empty answer")]
    Refusal,
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, BackendError>;
    fn health(&self) -> Result<(), BackendError>;
}

#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn LlmBackend>>,
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.backends.keys()).finish()
    }
}

impl BackendRegistry {
    pub fn register(&mut self, backend: Arc<dyn LlmBackend>) {
        self.backends.insert(backend.id().to_string(), backend);
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn LlmBackend>> {
        self.backends.get(id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }
}

/// Wraps a backend and counts calls to `complete`.
pub struct CountingBackend {
    inner: Arc<dyn LlmBackend>,
    calls: Arc<AtomicUsize>,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn LlmBackend>) -> Self {
        Self { inner, calls: Arc::new(AtomicUsize::new(0)) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn counter(&self) -> Arc<AtomicUsize> {
        Arc::clone(&self.calls)
    }
}

impl LlmBackend for CountingBackend {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, prompt: &Prompt, temperature: f64) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt, temperature)
    }

    fn health(&self) -> Result<(), BackendError> {
        self.inner.health()
    }
}

/// Splits text after `.`, `!` or `?` followed by whitespace or the end.
/// Sentences are returned trimmed and verbatim.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            if chars.peek().is_none_or(|(_, n)| n.is_whitespace()) {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Deterministic offline backend: returns up to two context sentences that
/// share the most content lemmas with the query, in document order.
pub struct ExtractiveBackend {
    lemmatizer: Arc<Lemmatizer>,
}

impl ExtractiveBackend {
    pub fn new(lemmatizer: Arc<Lemmatizer>) -> Self {
        Self { lemmatizer }
    }

    pub fn extract(&self, prompt: &Prompt) -> String {
        let query: BTreeSet<String> = self.lemmatizer.content_lemmas(&prompt.user_query).into_iter().collect();
        let mut scored: Vec<(usize, usize, &str)> = Vec::new();
        for block in &prompt.context_blocks {
            for sentence in split_sentences(&block.excerpt) {
                let lemmas: BTreeSet<String> = self.lemmatizer.content_lemmas(sentence).into_iter().collect();
                let overlap = lemmas.intersection(&query).count();
                if overlap > 0 {
                    scored.push((overlap, scored.len(), sentence));
                }
            }
        }
        if scored.is_empty() {
            return DONT_KNOW.to_string();
        }
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(2);
        scored.sort_by_key(|s| s.1);
        scored.iter().map(|s| s.2).collect::<Vec<_>>().join(" ")
    }
}

impl LlmBackend for ExtractiveBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn complete(&self, prompt: &Prompt, _temperature: f64) -> Result<String, BackendError> {
        Ok(self.extract(prompt))
    }

    fn health(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::ContextBlock;
    use crate::nlu::test_support::mini_kb;

    fn prompt(contexts: &[&str], query: &str) -> Prompt {
        Prompt {
            system_instruction: "{context} {query}".into(),
            context_blocks: contexts
                .iter()
                .enumerate()
                .map(|(i, c)| ContextBlock { id: format!("d{i}").as_str().into(), excerpt: c.to_string() })
                .collect(),
            user_query: query.into(),
            template_id: "standard".into(),
        }
    }

    fn backend() -> ExtractiveBackend {
        ExtractiveBackend::new(Arc::new(Lemmatizer::from_kb(&mini_kb())))
    }

    #[test]
    fn picks_the_overlapping_sentence() {
        let p = prompt(&["Dark chocolate costs 5 euro. We ship worldwide."], "price of dark chocolate");
        assert_eq!(backend().extract(&p), "Dark chocolate costs 5 euro.");
    }

    #[test]
    fn no_overlap_means_dont_know() {
        let p = prompt(&["We ship worldwide."], "pralines?");
        assert_eq!(backend().extract(&p), DONT_KNOW);
    }

    #[test]
    fn ties_return_both_in_document_order() {
        let p = prompt(&["Nuts are crunchy. Milk is fresh.", "Nuts come roasted."], "nut");
        assert_eq!(backend().extract(&p), "Nuts are crunchy. Nuts come roasted.");
    }

    #[test]
    fn at_most_two_sentences() {
        let p = prompt(&["Nut one. Nut two. Nut three. Nut nut chocolate."], "nut chocolate");
        assert_eq!(backend().extract(&p), "Nut one. Nut nut chocolate.");
    }

    #[test]
    fn sentence_splitting_keeps_decimals() {
        assert_eq!(split_sentences("It costs 4.50 euro. Done"), vec!["It costs 4.50 euro.", "Done"]);
        assert!(split_sentences("   ").is_empty());
    }

    #[test]
    fn counting_backend_counts() {
        let counting = CountingBackend::new(Arc::new(backend()));
        let p = prompt(&["x."], "y");
        counting.complete(&p, 0.0).unwrap();
        counting.complete(&p, 0.0).unwrap();
        assert_eq!(counting.calls(), 2);
        assert_eq!(counting.id(), MOCK_BACKEND_ID);
    }
}
