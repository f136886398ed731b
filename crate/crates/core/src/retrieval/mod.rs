//! Ranked retrieval over documents: tf-idf cosine, exact metadata and
//! annotation matches, and embedding similarity, fused per configuration.

mod embed;
mod index;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{dot, embed_with_vocabulary, fnv1a, Embedder, HashedEmbedder, EMBED_DIM};
pub use index::{Index, Posting, INDEX_HEADER};

use crate::knowledge::DocumentId;
use crate::nlu::Token;

/// Function words dropped from postings, query vectors and grounding checks.
pub const STOP_WORDS: [&str; 30] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "do", "does", "for", "from", "have", "how",
    "i", "in", "is", "it", "of", "on", "or", "that", "the", "this", "to", "was", "we", "what",
    "you", "your",
];

pub fn is_stop_word(token: &Token) -> bool {
    STOP_WORDS.contains(&token.surface.as_str()) || STOP_WORDS.contains(&token.lemma.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RetrievalMethod {
    MetadataOnly,
    FullText,
    Semantic,
    Vector,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    pub method: RetrievalMethod,
    #[serde(default)]
    pub w_text: f64,
    #[serde(default)]
    pub w_meta: f64,
    #[serde(default)]
    pub w_vec: f64,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            method: RetrievalMethod::Hybrid,
            w_text: 0.6,
            w_meta: 0.1,
            w_vec: 0.3,
            k: 3,
        }
    }
}

pub const WEIGHT_TOLERANCE: f64 = 1e-9;

impl RetrievalConfig {
    pub fn new(method: RetrievalMethod, k: usize) -> Self {
        let (w_text, w_meta, w_vec) = match method {
            RetrievalMethod::MetadataOnly => (0.0, 1.0, 0.0),
            RetrievalMethod::FullText | RetrievalMethod::Semantic => (1.0, 0.0, 0.0),
            RetrievalMethod::Vector => (0.0, 0.0, 1.0),
            RetrievalMethod::Hybrid => (0.6, 0.1, 0.3),
        };
        Self { method, w_text, w_meta, w_vec, k }
    }

    pub fn hybrid(w_text: f64, w_meta: f64, w_vec: f64, k: usize) -> Self {
        Self { method: RetrievalMethod::Hybrid, w_text, w_meta, w_vec, k }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be at least 1".into()));
        }
        for (name, w) in [("w_text", self.w_text), ("w_meta", self.w_meta), ("w_vec", self.w_vec)] {
            if !(0.0..=1.0).contains(&w) || !w.is_finite() {
                return Err(RetrievalError::InvalidConfig(format!("{name}={w} is outside [0, 1]")));
            }
        }
        if self.method == RetrievalMethod::Hybrid {
            let sum = self.w_text + self.w_meta + self.w_vec;
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(RetrievalError::InvalidConfig(format!(
                    "hybrid weights must sum to 1, got {sum}"
                )));
            }
        }
        Ok(())
    }

    /// Combines component scores according to the method.
    pub fn combine(&self, c: &ScoreComponents) -> f64 {
        match self.method {
            RetrievalMethod::MetadataOnly => c.meta_score,
            RetrievalMethod::FullText | RetrievalMethod::Semantic => c.text_score,
            RetrievalMethod::Vector => c.vec_score,
            RetrievalMethod::Hybrid => {
                self.w_text * c.text_score + self.w_meta * c.meta_score + self.w_vec * c.vec_score
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreComponents {
    pub text_score: f64,
    pub meta_score: f64,
    pub vec_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub id: DocumentId,
    pub score: f64,
    pub components: ScoreComponents,
    pub matched_fields: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("index file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalWarning {
    EmptyCorpus,
}
