//! Conversation manager: session state, NLU-first routing with a
//! configurable LLM invocation policy, and a full audit trace per turn.

mod engine;
mod session;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{query_metadata, Engine, ReplayError, TurnOutcome};
pub use session::{ConversationState, Role, SessionStore, TurnRecord, DEFAULT_MAX_IDLE};

use crate::generation::{GenerationConfig, GenerationError, GenerationMode, GroundingReport, Prompt};
use crate::nlu::{EntityRef, MatchResult, QuestionKind};
use crate::retrieval::{RetrievalConfig, RetrievalError, RetrievalMethod, ScoredDocument};

pub const DEFAULT_REFUSAL: &str = "I don't know based on the available information.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvocationPolicy {
    /// Go to retrieval whenever the rule match is not Conclusive.
    OnNotConclusive,
    /// Go to retrieval only when the rule match is None.
    OnNoneFound,
}

fn default_true() -> bool {
    true
}

fn default_refusal() -> String {
    DEFAULT_REFUSAL.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub retrieval: RetrievalConfig,
    pub generation: GenerationConfig,
    pub invocation_policy: InvocationPolicy,
    #[serde(default = "default_true")]
    pub nlu_enabled: bool,
    #[serde(default = "default_refusal")]
    pub refusal_text: String,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            generation: GenerationConfig::default(),
            invocation_policy: InvocationPolicy::OnNotConclusive,
            nlu_enabled: true,
            refusal_text: default_refusal(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("refusal text must not be empty")]
    EmptyRefusal,
    #[error("config file: {0}")]
    Parse(String),
}

impl ControlConfig {
    pub fn new(
        retrieval: RetrievalConfig,
        mode: GenerationMode,
        invocation_policy: InvocationPolicy,
    ) -> Self {
        Self {
            retrieval,
            generation: GenerationConfig::new(mode),
            invocation_policy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        self.retrieval.validate()?;
        self.generation.validate()?;
        if self.refusal_text.trim().is_empty() {
            return Err(ControlError::EmptyRefusal);
        }
        Ok(())
    }

    /// Parses TOML or JSON (by first non-blank character) and validates.
    pub fn parse(text: &str) -> Result<Self, ControlError> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ControlError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ControlError::Parse(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoutePath {
    RuleConclusive,
    RuleSupportiveHedged,
    RagGenerated,
    RagNoGeneration,
    Refusal,
}

impl RoutePath {
    pub const ALL: [RoutePath; 5] = [
        RoutePath::RuleConclusive,
        RoutePath::RuleSupportiveHedged,
        RoutePath::RagGenerated,
        RoutePath::RagNoGeneration,
        RoutePath::Refusal,
    ];

    pub fn is_rag(self) -> bool {
        !matches!(self, RoutePath::RuleConclusive | RoutePath::RuleSupportiveHedged)
    }
}

impl std::fmt::Display for RoutePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for RoutePath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoutePath::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| format!("unknown path `{s}`"))
    }
}

/// Audit record of one turn. Everything needed to replay it is included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingTrace {
    pub session_id: String,
    pub turn_id: u64,
    pub timestamp: chrono::DateTime<chrono::Utc>,
    pub utterance: String,
    pub answer: String,
    pub path: RoutePath,
    pub question_kind: QuestionKind,
    #[serde(rename = "match")]
    pub match_result: MatchResult,
    pub hedged: bool,
    pub retrieval_called: bool,
    pub retrieved: Vec<ScoredDocument>,
    pub prompt: Option<Prompt>,
    pub grounding: Option<GroundingReport>,
    pub backend_called: bool,
    pub error: Option<String>,
    pub config_snapshot: ControlConfig,
    pub kb_revision: u64,
    pub entities_before: Vec<EntityRef>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlLevel {
    pub ordinal: u8,
    pub label: String,
}

pub const MAX_CONTROL_LEVEL: u8 = 4;

/// Heuristic ordinal for how tightly a (retrieval, generation) pair
/// constrains output: `r + g - 1` with r in 0..=2 and g in 1..=3.
pub fn control_level(config: &ControlConfig) -> ControlLevel {
    let r: u8 = match config.retrieval.method {
        RetrievalMethod::MetadataOnly => 2,
        RetrievalMethod::FullText | RetrievalMethod::Semantic => 1,
        RetrievalMethod::Hybrid if config.retrieval.w_meta > 0.0 => 1,
        RetrievalMethod::Hybrid | RetrievalMethod::Vector => 0,
    };
    let g: u8 = match config.generation.mode {
        GenerationMode::NoGeneration => 3,
        GenerationMode::DynamicPrompt => 2,
        GenerationMode::StandardPrompt => 1,
    };
    let ordinal = r + g - 1;
    let label = match ordinal {
        MAX_CONTROL_LEVEL => "maximum control",
        0 | 1 => "low control",
        _ => "medium control",
    };
    ControlLevel { ordinal, label: label.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(retrieval: RetrievalConfig, mode: GenerationMode) -> ControlConfig {
        ControlConfig::new(retrieval, mode, InvocationPolicy::OnNotConclusive)
    }

    #[test]
    fn anchors() {
        let max = control_level(&cfg(RetrievalConfig::new(RetrievalMethod::MetadataOnly, 3), GenerationMode::NoGeneration));
        assert_eq!(max, ControlLevel { ordinal: 4, label: "maximum control".into() });
        let min = control_level(&cfg(RetrievalConfig::new(RetrievalMethod::Vector, 3), GenerationMode::StandardPrompt));
        assert_eq!(min, ControlLevel { ordinal: 0, label: "low control".into() });
        let hybrid_no_meta = RetrievalConfig::hybrid(0.5, 0.0, 0.5, 3);
        assert_eq!(control_level(&cfg(hybrid_no_meta, GenerationMode::StandardPrompt)).ordinal, 0);
    }

    #[test]
    fn every_other_combination_is_strictly_between() {
        let methods = [
            RetrievalConfig::new(RetrievalMethod::MetadataOnly, 3),
            RetrievalConfig::new(RetrievalMethod::FullText, 3),
            RetrievalConfig::new(RetrievalMethod::Semantic, 3),
            RetrievalConfig::new(RetrievalMethod::Vector, 3),
            RetrievalConfig::hybrid(0.5, 0.2, 0.3, 3),
            RetrievalConfig::hybrid(0.5, 0.0, 0.5, 3),
        ];
        let modes = [GenerationMode::NoGeneration, GenerationMode::DynamicPrompt, GenerationMode::StandardPrompt];
        let mut maxima = 0;
        for r in &methods {
            for m in modes {
                let l = control_level(&cfg(r.clone(), m));
                assert!(l.ordinal <= MAX_CONTROL_LEVEL);
                if l.ordinal == MAX_CONTROL_LEVEL {
                    maxima += 1;
                    assert_eq!((r.method, m), (RetrievalMethod::MetadataOnly, GenerationMode::NoGeneration));
                }
            }
        }
        assert_eq!(maxima, 1);
    }

    #[test]
    fn config_parses_from_toml_and_json() {
        let toml_text = r#"
            invocation_policy = "OnNoneFound"
            [retrieval]
            method = "MetadataOnly"
            k = 2
            [generation]
            mode = "NoGeneration"
        "#;
        let c = ControlConfig::parse(toml_text).unwrap();
        assert!(c.nlu_enabled);
        assert_eq!(c.refusal_text, DEFAULT_REFUSAL);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(ControlConfig::parse(&json).unwrap(), c);
    }

    #[test]
    fn bad_weights_fail_validation() {
        let c = cfg(RetrievalConfig::hybrid(0.5, 0.3, 0.3, 3), GenerationMode::StandardPrompt);
        assert!(matches!(c.validate(), Err(ControlError::Retrieval(_))));
    }

    #[test]
    fn path_round_trips_through_strings() {
        for p in RoutePath::ALL {
            assert_eq!(p.to_string().parse::<RoutePath>().unwrap(), p);
        }
    }
}
