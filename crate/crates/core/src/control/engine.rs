use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{
    ControlConfig, ConversationState, InvocationPolicy, Role, RoutePath, RoutingTrace, TurnRecord,
};
use crate::generation::{
    build_prompt, excerpt, generate, split_sentences, BackendRegistry, ExtractiveBackend,
    GenerationMode, GroundingReport, TemplateError, TemplateStore,
};
use crate::knowledge::KnowledgeBase;
use crate::nlu::{
    formulate_answer, match_knowledge, parse, resolve_referents, EntityRef, Lemmatizer, MatchResult,
    MatchStrength, ParsedUtterance, QuestionKind,
};
use crate::retrieval::Index;

/// Answer plus its audit record.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub answer: String,
    pub trace: RoutingTrace,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("trace was recorded against knowledge base revision {recorded}, current is {current}")]
    RevisionMismatch { recorded: u64, current: u64 },
}

/// Query-side metadata used by retrieval: `intent` from the question kind
/// (omitted for Smalltalk and Unknown) and `topic` from the first resolved
/// concept.
pub fn query_metadata(utterance: &ParsedUtterance) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    if !matches!(utterance.question_kind, QuestionKind::Smalltalk | QuestionKind::Unknown) {
        meta.insert("intent".to_string(), utterance.question_kind.as_str().to_string());
    }
    if let Some(concept) = utterance.resolved_concepts().first() {
        meta.insert("topic".to_string(), concept.to_string());
    }
    meta
}

/// Knowledge base, index, backends and templates for answering turns. All
/// parts are read-only during a turn; swap in a new engine to change them.
pub struct Engine {
    kb: Arc<KnowledgeBase>,
    index: Arc<Index>,
    backends: BackendRegistry,
    templates: RwLock<TemplateStore>,
    lemmatizer: Arc<Lemmatizer>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("documents", &self.kb.documents.len())
            .field("backends", &self.backends)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Builds the index and registers the extractive mock backend.
    pub fn new(kb: KnowledgeBase) -> Self {
        let lemmatizer = Arc::new(Lemmatizer::from_kb(&kb));
        let index = Index::build(kb.documents.values(), &lemmatizer);
        let mut backends = BackendRegistry::default();
        backends.register(Arc::new(ExtractiveBackend::new(Arc::clone(&lemmatizer))));
        Self {
            kb: Arc::new(kb),
            index: Arc::new(index),
            backends,
            templates: RwLock::new(TemplateStore::default()),
            lemmatizer,
        }
    }

    pub fn with_parts(
        kb: Arc<KnowledgeBase>,
        index: Arc<Index>,
        backends: BackendRegistry,
        templates: TemplateStore,
    ) -> Self {
        let lemmatizer = Arc::new(Lemmatizer::from_kb(&kb));
        Self { kb, index, backends, templates: RwLock::new(templates), lemmatizer }
    }

    /// Loads prompt templates from `dir` (falling back to the built-in ones).
    pub fn with_template_dir(self, dir: impl Into<PathBuf>) -> Result<Self, TemplateError> {
        let store = TemplateStore::load(dir)?;
        *self.templates.write().unwrap_or_else(|e| e.into_inner()) = store;
        Ok(self)
    }

    pub fn reload_templates(&self) -> Result<(), TemplateError> {
        self.templates.write().unwrap_or_else(|e| e.into_inner()).reload()
    }

    pub fn templates(&self) -> TemplateStore {
        self.templates.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Same backends and templates over a new knowledge base and index.
    pub fn rebuild(&self, kb: KnowledgeBase) -> Self {
        let lemmatizer = Lemmatizer::from_kb(&kb);
        let index = Index::build(kb.documents.values(), &lemmatizer);
        Self::with_parts(Arc::new(kb), Arc::new(index), self.backends.clone(), self.templates())
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn index(&self) -> &Arc<Index> {
        &self.index
    }

    pub fn backends(&self) -> &BackendRegistry {
        &self.backends
    }

    pub fn backends_mut(&mut self) -> &mut BackendRegistry {
        &mut self.backends
    }

    pub fn lemmatizer(&self) -> &Arc<Lemmatizer> {
        &self.lemmatizer
    }

    /// Parsed utterance with referents resolved against `entities`.
    pub fn understand(&self, utterance: &str, entities: &[EntityRef]) -> ParsedUtterance {
        resolve_referents(parse(utterance, &self.kb), entities, &self.kb.ontology)
    }

    pub fn handle_turn(
        &self,
        state: &mut ConversationState,
        utterance: &str,
        config: &ControlConfig,
    ) -> TurnOutcome {
        self.handle_turn_at(state, utterance, config, Utc::now())
    }

    /// Runs one turn: rules first, then retrieval, then (optionally)
    /// generation, as selected by `config`.
    pub fn handle_turn_at(
        &self,
        state: &mut ConversationState,
        utterance: &str,
        config: &ControlConfig,
        now: DateTime<Utc>,
    ) -> TurnOutcome {
        let started = Instant::now();
        let entities_before = state.entities.clone();
        let mut trace = RoutingTrace {
            session_id: state.session_id.clone(),
            turn_id: state.turns + 1,
            timestamp: now,
            utterance: utterance.to_string(),
            answer: String::new(),
            path: RoutePath::Refusal,
            question_kind: QuestionKind::Unknown,
            match_result: MatchResult::none(),
            hedged: false,
            retrieval_called: false,
            retrieved: Vec::new(),
            prompt: None,
            grounding: None,
            backend_called: false,
            error: None,
            config_snapshot: config.clone(),
            kb_revision: self.kb.revision,
            entities_before: entities_before.clone(),
            latency_ms: 0,
        };

        let parsed = config.nlu_enabled.then(|| self.understand(utterance, &entities_before));
        if let Some(p) = &parsed {
            trace.question_kind = p.question_kind;
            trace.match_result = match_knowledge(p, &self.kb);
        }
        let answer = self.route(utterance, parsed.as_ref(), config, &mut trace);

        trace.answer = answer.clone();
        trace.latency_ms = started.elapsed().as_millis() as u64;
        state.turns += 1;
        state.last_active = now;
        state.history.push(TurnRecord { role: Role::User, text: utterance.to_string() });
        state.history.push(TurnRecord { role: Role::Assistant, text: answer.clone() });
        if let Some(p) = &parsed {
            for (i, term) in p.terms.iter().enumerate() {
                if term.unresolved {
                    continue;
                }
                if let Some(concept) = &term.concept {
                    let sheet = (trace.match_result.term == Some(i))
                        .then(|| trace.match_result.sheet.clone())
                        .flatten();
                    state.entities.push(EntityRef { concept: concept.clone(), sheet });
                }
            }
        }
        TurnOutcome { answer, trace }
    }

    fn route(
        &self,
        utterance: &str,
        parsed: Option<&ParsedUtterance>,
        config: &ControlConfig,
        trace: &mut RoutingTrace,
    ) -> String {
        let m = trace.match_result.clone();
        let rule_path = match (m.strength, config.invocation_policy) {
            (MatchStrength::Conclusive, _) => Some(RoutePath::RuleConclusive),
            (MatchStrength::Supportive, InvocationPolicy::OnNoneFound) => Some(RoutePath::RuleSupportiveHedged),
            _ => None,
        };
        if let Some(path) = rule_path {
            match formulate_answer(&m, &self.kb) {
                Ok(a) => {
                    trace.path = path;
                    trace.hedged = a.hedged;
                    return a.text;
                }
                Err(e) => trace.error = Some(e.to_string()),
            }
        }

        let meta = parsed.map(query_metadata).unwrap_or_default();
        trace.retrieval_called = true;
        let hits = match self.index.search(&self.lemmatizer, &self.kb.ontology, utterance, &config.retrieval, &meta) {
            Ok(hits) => hits,
            Err(e) => {
                trace.error = Some(e.to_string());
                Vec::new()
            }
        };
        trace.retrieved = hits.clone();
        let Some(top) = hits.first() else {
            trace.path = RoutePath::Refusal;
            return config.refusal_text.clone();
        };

        if config.generation.mode == GenerationMode::NoGeneration {
            let Some(doc) = self.kb.documents.get(&top.id) else {
                trace.error = Some(format!("retrieved document {} is missing", top.id));
                trace.path = RoutePath::Refusal;
                return config.refusal_text.clone();
            };
            let lead = split_sentences(&doc.body).first().copied().unwrap_or_default();
            trace.path = RoutePath::RagNoGeneration;
            return format!("{}: {}", doc.title, excerpt(lead, config.generation.max_context_chars));
        }

        let kind = parsed.map_or(QuestionKind::Unknown, |p| p.question_kind);
        let prompt = {
            let templates = self.templates.read().unwrap_or_else(|e| e.into_inner());
            build_prompt(utterance, &hits, &self.kb.documents, &config.generation, kind, &templates)
        };
        let prompt = match prompt {
            Ok(p) => p,
            Err(e) => {
                trace.error = Some(e.to_string());
                trace.path = RoutePath::Refusal;
                return config.refusal_text.clone();
            }
        };
        trace.prompt = Some(prompt.clone());
        trace.backend_called = self.backends.get(&config.generation.backend_id).is_some();
        match generate(&self.backends, &prompt, &config.generation, &self.lemmatizer) {
            Ok(result) => {
                trace.path = RoutePath::RagGenerated;
                trace.grounding = Some(GroundingReport {
                    grounded: result.grounded,
                    ungrounded_spans: result.ungrounded_spans,
                });
                result.answer
            }
            Err(e) => {
                trace.error = Some(e.to_string());
                trace.path = RoutePath::Refusal;
                config.refusal_text.clone()
            }
        }
    }

    /// Re-runs a logged turn from its utterance, config snapshot and the
    /// entities known before it.
    pub fn replay(&self, trace: &RoutingTrace) -> Result<TurnOutcome, ReplayError> {
        if trace.kb_revision != self.kb.revision {
            return Err(ReplayError::RevisionMismatch {
                recorded: trace.kb_revision,
                current: self.kb.revision,
            });
        }
        let mut state = ConversationState::new(trace.session_id.clone(), trace.timestamp);
        state.turns = trace.turn_id.saturating_sub(1);
        state.entities = trace.entities_before.clone();
        Ok(self.handle_turn_at(&mut state, &trace.utterance, &trace.config_snapshot, trace.timestamp))
    }
}
