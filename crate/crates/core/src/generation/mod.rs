//! Prompt construction, LLM backends and grounding checks for the
//! retrieval-augmented path.

mod backend;
mod grounding;
mod remote;
mod templates;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    split_sentences, BackendError, BackendRegistry, CountingBackend, ExtractiveBackend, LlmBackend,
    DONT_KNOW, MOCK_BACKEND_ID,
};
pub use grounding::{check_grounding, GroundingReport};
pub use remote::{RemoteBackend, RemoteConfig, TOKEN_ENV};
pub use templates::{TemplateError, TemplateStore, TEMPLATE_IDS};

use crate::knowledge::{Document, DocumentId};
use crate::nlu::{Lemmatizer, QuestionKind};
use crate::retrieval::ScoredDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenerationMode {
    NoGeneration,
    DynamicPrompt,
    StandardPrompt,
}

fn default_max_context_chars() -> usize {
    2000
}

fn default_backend_id() -> String {
    MOCK_BACKEND_ID.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub mode: GenerationMode,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_context_chars")]
    pub max_context_chars: usize,
    #[serde(default = "default_backend_id")]
    pub backend_id: String,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self::new(GenerationMode::StandardPrompt)
    }
}

impl GenerationConfig {
    pub fn new(mode: GenerationMode) -> Self {
        Self {
            mode,
            temperature: 0.0,
            max_context_chars: default_max_context_chars(),
            backend_id: default_backend_id(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GenerationError::InvalidConfig(format!(
                "temperature {} must be a finite value >= 0",
                self.temperature
            )));
        }
        if self.max_context_chars == 0 {
            return Err(GenerationError::InvalidConfig("max_context_chars must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBlock {
    pub id: DocumentId,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    /// Template text with `{context}` and `{query}` placeholders.
    pub system_instruction: String,
    pub context_blocks: Vec<ContextBlock>,
    pub user_query: String,
    pub template_id: String,
}

impl Prompt {
    pub fn render_context(&self) -> String {
        self.context_blocks
            .iter()
            .map(|b| format!("[{}] {}", b.id, b.excerpt))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Full prompt text with placeholders filled in.
    pub fn render(&self) -> String {
        self.system_instruction
            .replace("{context}", &self.render_context())
            .replace("{query}", &self.user_query)
    }

    /// Template text without its placeholders.
    pub fn fixed_text(&self) -> String {
        self.system_instruction.replace("{context}", " ").replace("{query}", " ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub answer: String,
    pub backend_id: String,
    pub prompt: Prompt,
    pub grounded: bool,
    pub ungrounded_spans: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("no context documents to build a prompt from")]
    EmptyContext,
    #[error("generation mode NoGeneration does not build prompts")]
    NoGeneration,
    #[error("context document {0} is not in the knowledge base")]
    UnknownDocument(DocumentId),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// First `max_chars` characters of `body`.
pub fn excerpt(body: &str, max_chars: usize) -> String {
    body.chars().take(max_chars).collect()
}

/// Template chosen for a question kind under DynamicPrompt.
pub fn template_for(mode: GenerationMode, kind: QuestionKind) -> &'static str {
    match (mode, kind) {
        (GenerationMode::DynamicPrompt, QuestionKind::Factoid) => "factoid",
        (GenerationMode::DynamicPrompt, QuestionKind::Definition) => "definition",
        (GenerationMode::DynamicPrompt, QuestionKind::Procedural) => "procedural",
        (GenerationMode::DynamicPrompt, QuestionKind::YesNo) => "yesno",
        _ => "standard",
    }
}

/// Builds the augmented prompt: template, then contexts in retrieval order,
/// then the query.
pub fn build_prompt(
    query: &str,
    contexts: &[ScoredDocument],
    documents: &BTreeMap<DocumentId, Document>,
    config: &GenerationConfig,
    kind: QuestionKind,
    templates: &TemplateStore,
) -> Result<Prompt, GenerationError> {
    if config.mode == GenerationMode::NoGeneration {
        return Err(GenerationError::NoGeneration);
    }
    if contexts.is_empty() {
        return Err(GenerationError::EmptyContext);
    }
    let template_id = template_for(config.mode, kind);
    let context_blocks = contexts
        .iter()
        .map(|c| {
            let doc = documents
                .get(&c.id)
                .ok_or_else(|| GenerationError::UnknownDocument(c.id.clone()))?;
            Ok(ContextBlock {
                id: c.id.clone(),
                excerpt: excerpt(&doc.body, config.max_context_chars),
            })
        })
        .collect::<Result<Vec<_>, GenerationError>>()?;
    Ok(Prompt {
        system_instruction: templates.get(template_id)?.to_string(),
        context_blocks,
        user_query: query.to_string(),
        template_id: template_id.to_string(),
    })
}

/// Calls the configured backend and attaches a grounding report. Backend
/// failures are returned as errors; an empty reply is a refusal.
pub fn generate(
    registry: &BackendRegistry,
    prompt: &Prompt,
    config: &GenerationConfig,
    lemmatizer: &Lemmatizer,
) -> Result<GenerationResult, GenerationError> {
    let backend = registry.get(&config.backend_id).ok_or_else(|| {
        BackendError::Unavailable(format!("no backend registered as `{}`", config.backend_id))
    })?;
    let answer = backend.complete(prompt, config.temperature)?;
    let answer = answer.trim().to_string();
    if answer.is_empty() {
        return Err(BackendError::Refusal.into());
    }
    let report = check_grounding(&answer, prompt, lemmatizer);
    Ok(GenerationResult {
        answer,
        backend_id: backend.id().to_string(),
        prompt: prompt.clone(),
        grounded: report.grounded,
        ungrounded_spans: report.ungrounded_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu::test_support::mini_kb;
    use crate::retrieval::ScoreComponents;
    use std::sync::Arc;

    fn doc(id: &str, body: &str) -> Document {
        Document {
            id: id.into(),
            title: id.into(),
            body: body.into(),
            metadata: BTreeMap::new(),
            annotations: BTreeMap::new(),
            source: "test".into(),
            revision: 1,
        }
    }

    fn hit(id: &str, score: f64) -> ScoredDocument {
        ScoredDocument { id: id.into(), score, components: ScoreComponents::default(), matched_fields: vec![] }
    }

    fn docs() -> BTreeMap<DocumentId, Document> {
        [
            doc("a", "Dark chocolate costs 5 euro. We ship worldwide."),
            doc("b", "Milk chocolate contains milk."),
        ]
        .into_iter()
        .map(|d| (d.id.clone(), d))
        .collect()
    }

    #[test]
    fn standard_prompt_keeps_retrieval_order() {
        let p = build_prompt(
            "price?",
            &[hit("b", 0.9), hit("a", 0.5)],
            &docs(),
            &GenerationConfig::new(GenerationMode::StandardPrompt),
            QuestionKind::Procedural,
            &TemplateStore::default(),
        )
        .unwrap();
        assert_eq!(p.template_id, "standard");
        let ids: Vec<_> = p.context_blocks.iter().map(|b| b.id.as_str()).collect();
        assert_eq!(ids, ["b", "a"]);
        let rendered = p.render();
        assert!(rendered.find("[b]").unwrap() < rendered.find("[a]").unwrap());
        assert!(rendered.find("[a]").unwrap() < rendered.find("price?").unwrap());
    }

    #[test]
    fn dynamic_prompt_picks_template_by_kind() {
        let p = build_prompt(
            "how do i order",
            &[hit("a", 1.0)],
            &docs(),
            &GenerationConfig::new(GenerationMode::DynamicPrompt),
            QuestionKind::Procedural,
            &TemplateStore::default(),
        )
        .unwrap();
        assert_eq!(p.template_id, "procedural");
        assert_eq!(template_for(GenerationMode::DynamicPrompt, QuestionKind::Smalltalk), "standard");
        assert_eq!(template_for(GenerationMode::DynamicPrompt, QuestionKind::Unknown), "standard");
    }

    #[test]
    fn excerpts_are_prefix_truncated() {
        let mut cfg = GenerationConfig::new(GenerationMode::StandardPrompt);
        cfg.max_context_chars = 10;
        let p = build_prompt("q", &[hit("a", 1.0)], &docs(), &cfg, QuestionKind::Unknown, &TemplateStore::default())
            .unwrap();
        assert_eq!(p.context_blocks[0].excerpt, "Dark choco");
    }

    #[test]
    fn empty_context_and_no_generation_are_errors() {
        let cfg = GenerationConfig::new(GenerationMode::StandardPrompt);
        let t = TemplateStore::default();
        assert_eq!(
            build_prompt("q", &[], &docs(), &cfg, QuestionKind::Unknown, &t),
            Err(GenerationError::EmptyContext)
        );
        let cfg = GenerationConfig::new(GenerationMode::NoGeneration);
        assert_eq!(
            build_prompt("q", &[hit("a", 1.0)], &docs(), &cfg, QuestionKind::Unknown, &t),
            Err(GenerationError::NoGeneration)
        );
    }

    fn registry() -> (BackendRegistry, Lemmatizer) {
        let lemmatizer = Lemmatizer::from_kb(&mini_kb());
        let mut registry = BackendRegistry::default();
        registry.register(Arc::new(ExtractiveBackend::new(Arc::new(lemmatizer.clone()))));
        (registry, lemmatizer)
    }

    #[test]
    fn mock_generation_is_grounded_and_deterministic() {
        let (registry, lemmatizer) = registry();
        let cfg = GenerationConfig::new(GenerationMode::StandardPrompt);
        let p = build_prompt(
            "price of dark chocolate",
            &[hit("a", 1.0)],
            &docs(),
            &cfg,
            QuestionKind::Factoid,
            &TemplateStore::default(),
        )
        .unwrap();
        let first = generate(&registry, &p, &cfg, &lemmatizer).unwrap();
        assert_eq!(first.answer, "Dark chocolate costs 5 euro.");
        assert!(first.grounded);
        assert_eq!(first, generate(&registry, &p, &cfg, &lemmatizer).unwrap());
    }

    #[test]
    fn unregistered_backend_is_unavailable() {
        let (registry, lemmatizer) = registry();
        let mut cfg = GenerationConfig::new(GenerationMode::StandardPrompt);
        cfg.backend_id = "nope".into();
        let p = build_prompt("q", &[hit("a", 1.0)], &docs(), &cfg, QuestionKind::Unknown, &TemplateStore::default())
            .unwrap();
        assert!(matches!(
            generate(&registry, &p, &cfg, &lemmatizer),
            Err(GenerationError::Backend(BackendError::Unavailable(_)))
        ));
    }

    #[test]
    fn config_defaults_from_toml() {
        let cfg: GenerationConfig = toml::from_str("mode = \"DynamicPrompt\"").unwrap();
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.max_context_chars, 2000);
        assert_eq!(cfg.backend_id, "mock");
        let mut bad = cfg.clone();
        bad.temperature = -1.0;
        assert!(bad.validate().is_err());
    }
}
