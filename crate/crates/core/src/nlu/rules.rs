//! Editable pipeline rules: suffix stripping, chunk grammar and question cues.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::knowledge::{KnowledgeError, Pos};
use crate::nlu::ChunkKind;

const DEFAULT_RULES: &str = include_str!("../../resources/rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuffixRule {
    pub suffix: String,
    #[serde(default)]
    pub replacement: String,
    #[serde(default)]
    pub features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantifier {
    One,
    Optional,
    Star,
    Plus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternElement {
    pub pos: Pos,
    pub quantifier: Quantifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadPick {
    First,
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkRuleSpec {
    pub kind: ChunkKind,
    pub pattern: String,
    pub head: String,
}

/// A compiled chunk rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkRule {
    pub kind: ChunkKind,
    pub elements: Vec<PatternElement>,
    pub head_pos: Pos,
    pub head_pick: HeadPick,
    spec: ChunkRuleSpec,
}

impl ChunkRule {
    pub fn compile(spec: ChunkRuleSpec) -> Result<Self, String> {
        let mut elements = Vec::new();
        for part in spec.pattern.split_whitespace() {
            let (name, quantifier) = match part.chars().last() {
                Some('?') => (&part[..part.len() - 1], Quantifier::Optional),
                Some('*') => (&part[..part.len() - 1], Quantifier::Star),
                Some('+') => (&part[..part.len() - 1], Quantifier::Plus),
                _ => (part, Quantifier::One),
            };
            let pos = Pos::parse(name).ok_or_else(|| format!("unknown part of speech `{name}`"))?;
            elements.push(PatternElement { pos, quantifier });
        }
        if elements.is_empty() {
            return Err("empty chunk pattern".into());
        }
        if elements
            .iter()
            .all(|e| matches!(e.quantifier, Quantifier::Optional | Quantifier::Star))
        {
            return Err(format!("pattern `{}` can match zero tokens", spec.pattern));
        }
        let mut head = spec.head.split_whitespace();
        let (pick, pos) = match (head.next(), head.next(), head.next()) {
            (Some("first"), Some(p), None) => (HeadPick::First, p),
            (Some("last"), Some(p), None) => (HeadPick::Last, p),
            _ => return Err(format!("head `{}` must be `first <Pos>` or `last <Pos>`", spec.head)),
        };
        let head_pos = Pos::parse(pos).ok_or_else(|| format!("unknown part of speech `{pos}`"))?;
        if !elements.iter().any(|e| e.pos == head_pos) {
            return Err(format!("head `{pos}` does not occur in pattern `{}`", spec.pattern));
        }
        Ok(Self {
            kind: spec.kind,
            elements,
            head_pos,
            head_pick: pick,
            spec,
        })
    }

    pub fn spec(&self) -> &ChunkRuleSpec {
        &self.spec
    }

    /// All end positions (exclusive) reachable by matching the pattern
    /// against `pos` starting at `start`.
    pub fn match_ends(&self, pos: &[Pos], start: usize) -> Vec<usize> {
        let mut states = vec![start];
        for element in &self.elements {
            let mut next = Vec::new();
            for &at in &states {
                match element.quantifier {
                    Quantifier::One => {
                        if pos.get(at) == Some(&element.pos) {
                            next.push(at + 1);
                        }
                    }
                    Quantifier::Optional => {
                        next.push(at);
                        if pos.get(at) == Some(&element.pos) {
                            next.push(at + 1);
                        }
                    }
                    Quantifier::Star | Quantifier::Plus => {
                        if element.quantifier == Quantifier::Star {
                            next.push(at);
                        }
                        let mut i = at;
                        while pos.get(i) == Some(&element.pos) {
                            i += 1;
                            next.push(i);
                        }
                    }
                }
            }
            next.sort_unstable();
            next.dedup();
            states = next;
            if states.is_empty() {
                break;
            }
        }
        states.retain(|&end| end > start);
        states
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cues {
    #[serde(default)]
    pub wh_words: Vec<String>,
    #[serde(default)]
    pub definition_words: Vec<String>,
    #[serde(default)]
    pub auxiliaries: Vec<String>,
    #[serde(default)]
    pub procedural_prefixes: Vec<String>,
    #[serde(default)]
    pub greetings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesFile {
    #[serde(default)]
    pub suffix: Vec<SuffixRule>,
    #[serde(default)]
    pub chunk: Vec<ChunkRuleSpec>,
    #[serde(default)]
    pub cues: Cues,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rules {
    pub suffixes: Vec<SuffixRule>,
    pub chunks: Vec<ChunkRule>,
    pub cues: Cues,
}

impl Rules {
    pub fn from_file(file: RulesFile, path: &str) -> Result<Self, KnowledgeError> {
        let chunks = file
            .chunk
            .into_iter()
            .map(ChunkRule::compile)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|reason| KnowledgeError::MalformedFile {
                path: path.to_string(),
                reason,
            })?;
        let lower = |v: Vec<String>| v.into_iter().map(|s| s.trim().to_lowercase()).collect();
        Ok(Self {
            suffixes: file.suffix,
            chunks,
            cues: Cues {
                wh_words: lower(file.cues.wh_words),
                definition_words: lower(file.cues.definition_words),
                auxiliaries: lower(file.cues.auxiliaries),
                procedural_prefixes: lower(file.cues.procedural_prefixes),
                greetings: lower(file.cues.greetings),
            },
        })
    }

    pub fn parse(text: &str, path: &str) -> Result<Self, KnowledgeError> {
        let file: RulesFile = toml::from_str(text).map_err(|e| KnowledgeError::MalformedFile {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        Self::from_file(file, path)
    }

    pub fn to_file(&self) -> RulesFile {
        RulesFile {
            suffix: self.suffixes.clone(),
            chunk: self.chunks.iter().map(|c| c.spec().clone()).collect(),
            cues: self.cues.clone(),
        }
    }
}

impl Default for Rules {
    fn default() -> Self {
        Self::parse(DEFAULT_RULES, "<built-in rules>").expect("built-in rules are valid")
    }
}
