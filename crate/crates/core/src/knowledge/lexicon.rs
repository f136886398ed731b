use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Pronoun,
    Determiner,
    Preposition,
    Other,
}

impl Pos {
    pub fn parse(s: &str) -> Option<Pos> {
        Some(match s {
            "Noun" => Pos::Noun,
            "Verb" => Pos::Verb,
            "Adjective" => Pos::Adjective,
            "Pronoun" => Pos::Pronoun,
            "Determiner" => Pos::Determiner,
            "Preposition" => Pos::Preposition,
            "Other" => Pos::Other,
            _ => return None,
        })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconEntry {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconFile {
    #[serde(default, rename = "entry")]
    pub entries: Vec<LexiconEntry>,
}

/// Surface-form lookup table. Entries keep file order; lookups return the
/// first entry for a surface regardless of part of speech.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_surface: BTreeMap<String, usize>,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>, path: &str) -> Result<Self, KnowledgeError> {
        let mut seen = BTreeSet::new();
        let mut by_surface = BTreeMap::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for mut entry in entries {
            entry.surface = entry.surface.trim().to_lowercase();
            entry.lemma = entry.lemma.trim().to_lowercase();
            entry.concept = entry.concept.map(|c| c.trim().to_lowercase());
            if entry.surface.is_empty() || entry.lemma.is_empty() {
                return Err(KnowledgeError::MalformedFile {
                    path: path.to_string(),
                    reason: "lexicon entry with empty surface or lemma".into(),
                });
            }
            if !seen.insert((entry.surface.clone(), entry.pos)) {
                return Err(KnowledgeError::MalformedFile {
                    path: path.to_string(),
                    reason: format!("duplicate lexicon entry ({}, {})", entry.surface, entry.pos),
                });
            }
            by_surface.entry(entry.surface.clone()).or_insert(normalized.len());
            normalized.push(entry);
        }
        Ok(Self {
            entries: normalized,
            by_surface,
        })
    }

    pub fn lookup(&self, surface: &str) -> Option<&LexiconEntry> {
        self.by_surface.get(surface).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
