use serde::{Deserialize, Serialize};

use super::ParsedUtterance;
use crate::knowledge::Ontology;

/// An entity mentioned earlier in the conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub concept: String,
    pub sheet: Option<String>,
}

/// Replaces each referential term's concept with the most recent compatible
/// entity (equal, or subsumed in either direction). Terms with no compatible
/// entity stay flagged `unresolved`.
pub fn resolve_referents(
    mut utterance: ParsedUtterance,
    history: &[EntityRef],
    ontology: &Ontology,
) -> ParsedUtterance {
    for term in utterance.terms.iter_mut().filter(|t| t.referential) {
        let found = history.iter().rev().find(|entity| match &term.concept {
            Some(c) => ontology.compatible(c, &entity.concept),
            None => true,
        });
        match found {
            Some(entity) => {
                term.concept = Some(entity.concept.clone());
                term.unresolved = false;
            }
            None => term.unresolved = true,
        }
    }
    utterance
}
