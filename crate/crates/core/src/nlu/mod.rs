//! Rule-based understanding pipeline.
//!
//! `preprocess` → `analyze_morphology` → `chunk` → `integrate_clauses` →
//! `resolve_referents` → `match_knowledge` → `formulate_answer`. Every stage
//! is deterministic and reads the knowledge base without mutating it.

mod answer;
mod chunker;
mod clauses;
mod matcher;
mod morphology;
mod preprocess;
mod referents;
mod rules;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use answer::{
    formulate_answer, AnswerError, AnswerSegment, RuleAnswer, SegmentSource, HEDGE_MARKER,
    TEMPLATE_STRINGS,
};
pub use chunker::chunk;
pub use clauses::{classify_question, integrate_clauses};
pub use matcher::{best_for_term, evaluate_candidate, match_knowledge};
pub use morphology::analyze_morphology;
pub use preprocess::preprocess;
pub use referents::{resolve_referents, EntityRef};
pub use rules::{
    ChunkRule, ChunkRuleSpec, Cues, HeadPick, PatternElement, Quantifier, Rules, RulesFile,
    SuffixRule,
};

use crate::knowledge::{KnowledgeBase, Lexicon, Ontology, Pos};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub features: BTreeMap<String, String>,
    pub concept: Option<String>,
    /// Character offsets `[start, end)` into the normalized text.
    pub span: (usize, usize),
}

impl Token {
    pub fn feature(&self, name: &str) -> Option<&str> {
        self.features.get(name).map(String::as_str)
    }

    pub fn is_word(&self) -> bool {
        self.surface.chars().any(char::is_alphanumeric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChunkKind {
    NP,
    VP,
    PP,
    Other,
}

/// Contiguous token range `[start, end)` with a head index relative to `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub kind: ChunkKind,
    pub start: usize,
    pub end: usize,
    pub head: usize,
}

impl Chunk {
    pub fn head_index(&self) -> usize {
        self.start + self.head
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub predicate: usize,
    pub arguments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintValue {
    Concept(String),
    Scalar(String),
}

impl fmt::Display for ConstraintValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintValue::Concept(c) | ConstraintValue::Scalar(c) => f.write_str(c),
        }
    }
}

/// A `(slot or relation, expected value)` requirement on a term.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub slot: String,
    pub expected: ConstraintValue,
}

impl Constraint {
    pub fn concept(slot: &str, concept: &str) -> Self {
        Self {
            slot: slot.to_string(),
            expected: ConstraintValue::Concept(concept.to_string()),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.slot, self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    /// `None` only for a referential term that has not been resolved.
    pub concept: Option<String>,
    pub constraints: Vec<Constraint>,
    /// Index of the chunk the term came from.
    pub origin: usize,
    pub referential: bool,
    pub unresolved: bool,
}

impl Term {
    pub fn new(concept: &str, constraints: Vec<Constraint>) -> Self {
        Self {
            concept: Some(concept.to_string()),
            constraints,
            origin: 0,
            referential: false,
            unresolved: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuestionKind {
    Factoid,
    Definition,
    Procedural,
    YesNo,
    Smalltalk,
    Unknown,
}

impl QuestionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionKind::Factoid => "factoid",
            QuestionKind::Definition => "definition",
            QuestionKind::Procedural => "procedural",
            QuestionKind::YesNo => "yesno",
            QuestionKind::Smalltalk => "smalltalk",
            QuestionKind::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedUtterance {
    pub raw: String,
    pub normalized: String,
    pub tokens: Vec<Token>,
    pub chunks: Vec<Chunk>,
    pub clauses: Vec<Clause>,
    pub terms: Vec<Term>,
    pub question_kind: QuestionKind,
}

impl ParsedUtterance {
    /// Concepts of all non-referential or resolved terms, in order.
    pub fn resolved_concepts(&self) -> Vec<&str> {
        self.terms
            .iter()
            .filter(|t| !t.unresolved)
            .filter_map(|t| t.concept.as_deref())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchStrength {
    Conclusive,
    Supportive,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub strength: MatchStrength,
    pub sheet: Option<String>,
    /// Term of the utterance the sheet was matched for.
    pub term: Option<usize>,
    pub satisfied: Vec<Constraint>,
    pub unverifiable: Vec<Constraint>,
    pub contradicted: Vec<Constraint>,
}

impl MatchResult {
    pub fn none() -> Self {
        Self {
            strength: MatchStrength::None,
            sheet: None,
            term: None,
            satisfied: Vec::new(),
            unverifiable: Vec::new(),
            contradicted: Vec::new(),
        }
    }
}

/// Preprocessing plus morphology: tokens with lemmas, parts of speech and
/// concepts filled in.
pub fn analyze(
    text: &str,
    lexicon: &Lexicon,
    rules: &Rules,
    ontology: Option<&Ontology>,
) -> (String, Vec<Token>) {
    let (normalized, mut tokens) = preprocess(text);
    analyze_morphology(&mut tokens, lexicon, rules, ontology);
    (normalized, tokens)
}

/// Runs the parsing stages (everything before referent resolution).
pub fn parse(text: &str, kb: &KnowledgeBase) -> ParsedUtterance {
    let (normalized, tokens) = analyze(text, &kb.lexicon, &kb.rules, Some(&kb.ontology));
    let chunks = chunk(&tokens, &kb.rules);
    integrate_clauses(text, normalized, tokens, chunks, &kb.rules, &kb.ontology)
}

/// Lexicon and rules bundled for lemmatizing free text (generation and
/// grounding never see the rest of the knowledge base).
#[derive(Debug, Clone, Default)]
pub struct Lemmatizer {
    lexicon: Lexicon,
    rules: Rules,
}

impl Lemmatizer {
    pub fn new(lexicon: Lexicon, rules: Rules) -> Self {
        Self { lexicon, rules }
    }

    pub fn from_kb(kb: &KnowledgeBase) -> Self {
        Self::new(kb.lexicon.clone(), kb.rules.clone())
    }

    pub fn tokens(&self, text: &str) -> (String, Vec<Token>) {
        analyze(text, &self.lexicon, &self.rules, None)
    }

    /// Lemmas of content words (alphanumeric, not stop-words), in order.
    pub fn content_lemmas(&self, text: &str) -> Vec<String> {
        self.tokens(text)
            .1
            .into_iter()
            .filter(is_content)
            .map(|t| t.lemma)
            .collect()
    }

    /// Concept of the first lexicon entry with this lemma.
    pub fn concept_of(&self, lemma: &str) -> Option<String> {
        self.lexicon
            .entries()
            .iter()
            .find(|e| e.lemma == lemma && e.concept.is_some())
            .and_then(|e| e.concept.clone())
    }

    /// Lemmas of all lexicon entries mapped to `concept`.
    pub fn lemmas_with_concept(&self, concept: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .lexicon
            .entries()
            .iter()
            .filter(|e| e.concept.as_deref() == Some(concept))
            .map(|e| e.lemma.clone())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Content token: has an alphanumeric character and is not a stop-word.
pub fn is_content(token: &Token) -> bool {
    token.is_word() && !crate::retrieval::is_stop_word(token)
}
