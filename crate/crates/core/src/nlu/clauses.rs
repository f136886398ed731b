use super::{
    Chunk, ChunkKind, Clause, Constraint, ConstraintValue, ParsedUtterance, QuestionKind, Rules,
    Term, Token,
};
use crate::knowledge::{Ontology, Pos};

/// Concept denoted by an NP or PP: the longest paraphrase ending at the head,
/// else the head token's concept.
fn chunk_concept(tokens: &[Token], chunk: &Chunk, ontology: &Ontology) -> Option<String> {
    let lemmas: Vec<String> = tokens[chunk.start..=chunk.head_index()]
        .iter()
        .filter(|t| !matches!(t.pos, Pos::Determiner | Pos::Preposition))
        .map(|t| t.lemma.clone())
        .collect();
    if let Some((concept, _)) = ontology.paraphrase_suffix(&lemmas) {
        return Some(concept.to_string());
    }
    tokens[chunk.head_index()].concept.clone()
}

fn is_referential(token: &Token) -> bool {
    token.feature("referential") == Some("true")
}

fn slot_marker<'a>(tokens: &'a [Token], chunk: &Chunk) -> Option<&'a str> {
    tokens[chunk.start..chunk.end].iter().find_map(|t| t.feature("slot"))
}

/// Builds clauses, terms and the question kind from chunks.
///
/// * each VP is a clause predicate; NPs, PPs and referential pronouns attach
///   to the nearest VP (the preceding one on ties);
/// * each NP/PP with a concept yields a term, a referential pronoun yields an
///   unresolved referential term;
/// * an NP right after a VP carrying a `slot` feature (`contain`), or a PP
///   whose preposition carries one (`with`), becomes a constraint on the
///   preceding term instead of a term of its own.
pub fn integrate_clauses(
    raw: &str,
    normalized: String,
    tokens: Vec<Token>,
    chunks: Vec<Chunk>,
    rules: &Rules,
    ontology: &Ontology,
) -> ParsedUtterance {
    let mut terms: Vec<Term> = Vec::new();
    let mut argument_chunks = Vec::new();
    let mut slot_vp: Option<(usize, String)> = None;

    for (ci, chunk) in chunks.iter().enumerate() {
        match chunk.kind {
            ChunkKind::VP => {
                slot_vp = slot_marker(&tokens, chunk).map(|s| (ci, s.to_string()));
            }
            ChunkKind::NP | ChunkKind::PP => {
                argument_chunks.push(ci);
                let slot = match chunk.kind {
                    ChunkKind::PP => tokens[chunk.start].feature("slot").map(str::to_string),
                    _ => slot_vp
                        .as_ref()
                        .filter(|(vp, _)| vp + 1 == ci)
                        .map(|(_, s)| s.clone()),
                };
                let concept = chunk_concept(&tokens, chunk, ontology);
                if let (Some(slot), Some(host)) = (slot, terms.last_mut()) {
                    let expected = match concept {
                        Some(c) => ConstraintValue::Concept(c),
                        None => ConstraintValue::Scalar(tokens[chunk.head_index()].lemma.clone()),
                    };
                    host.constraints.push(Constraint { slot, expected });
                } else if let Some(concept) = concept {
                    let referential = tokens[chunk.start..chunk.end].iter().any(is_referential);
                    terms.push(Term {
                        concept: Some(concept),
                        constraints: Vec::new(),
                        origin: ci,
                        referential,
                        unresolved: referential,
                    });
                }
            }
            ChunkKind::Other => {
                let token = &tokens[chunk.start];
                if chunk.len() == 1 && token.pos == Pos::Pronoun && is_referential(token) {
                    argument_chunks.push(ci);
                    terms.push(Term {
                        concept: token.concept.clone(),
                        constraints: Vec::new(),
                        origin: ci,
                        referential: true,
                        unresolved: true,
                    });
                }
            }
        }
    }

    let predicates: Vec<usize> = chunks
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ChunkKind::VP)
        .map(|(i, _)| i)
        .collect();
    let mut clauses: Vec<Clause> = predicates
        .iter()
        .map(|&p| Clause {
            predicate: p,
            arguments: Vec::new(),
        })
        .collect();
    for &arg in &argument_chunks {
        let nearest = predicates
            .iter()
            .enumerate()
            .min_by_key(|(_, &p)| (p.abs_diff(arg), p > arg));
        if let Some((k, _)) = nearest {
            clauses[k].arguments.push(arg);
        }
    }

    let question_kind = classify_question(&tokens, &chunks, rules);
    ParsedUtterance {
        raw: raw.to_string(),
        normalized,
        tokens,
        chunks,
        clauses,
        terms,
        question_kind,
    }
}

fn starts_with_phrase(words: &[&str], phrase: &str) -> bool {
    let parts: Vec<&str> = phrase.split_whitespace().collect();
    !parts.is_empty() && words.len() >= parts.len() && words[..parts.len()] == parts[..]
}

/// Surface-cue classification: greeting, procedural prefix, wh-word
/// (definition when `what/who + be + NP` ends the utterance), auxiliary.
pub fn classify_question(tokens: &[Token], chunks: &[Chunk], rules: &Rules) -> QuestionKind {
    let cues = &rules.cues;
    let words: Vec<&str> = tokens
        .iter()
        .filter(|t| t.is_word())
        .map(|t| t.surface.as_str())
        .collect();
    let Some(first) = words.first() else {
        return QuestionKind::Unknown;
    };
    if cues.greetings.iter().any(|g| starts_with_phrase(&words, g)) {
        return QuestionKind::Smalltalk;
    }
    if cues.procedural_prefixes.iter().any(|p| starts_with_phrase(&words, p)) {
        return QuestionKind::Procedural;
    }
    if cues.wh_words.iter().any(|w| w == first) {
        if cues.definition_words.iter().any(|w| w == first) && is_definition_shape(tokens, chunks) {
            return QuestionKind::Definition;
        }
        return QuestionKind::Factoid;
    }
    if cues.auxiliaries.iter().any(|w| w == first) {
        return QuestionKind::YesNo;
    }
    QuestionKind::Unknown
}

fn is_definition_shape(tokens: &[Token], chunks: &[Chunk]) -> bool {
    let content: Vec<&Chunk> = chunks
        .iter()
        .filter(|c| tokens[c.start..c.end].iter().any(Token::is_word))
        .collect();
    match content.as_slice() {
        [_, copula, np] => {
            copula.kind == ChunkKind::VP
                && tokens[copula.head_index()].lemma == "be"
                && np.kind == ChunkKind::NP
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu::{parse, test_support::mini_kb};

    #[test]
    fn containing_becomes_constraint() {
        let kb = mini_kb();
        let u = parse("chocolate containing nuts", &kb);
        assert_eq!(u.terms.len(), 1);
        assert_eq!(u.terms[0].concept.as_deref(), Some("chocolate"));
        assert_eq!(u.terms[0].constraints, vec![Constraint::concept("contains", "nut")]);
    }

    #[test]
    fn with_pp_becomes_constraint() {
        let u = parse("dark chocolate with nuts", &mini_kb());
        assert_eq!(u.terms.len(), 1);
        assert_eq!(u.terms[0].concept.as_deref(), Some("dark_chocolate"));
        assert_eq!(u.terms[0].constraints, vec![Constraint::concept("contains", "nut")]);
    }

    #[test]
    fn greeting_is_smalltalk() {
        let u = parse("hello", &mini_kb());
        assert_eq!(u.question_kind, QuestionKind::Smalltalk);
        assert!(u.terms.is_empty());
    }

    #[test]
    fn definition_question_via_synonym() {
        // what(Pronoun) is(Verb) a praline(NP) ?(Other): wh + copula + NP -> Definition;
        // praline is in the chocolate synonym set.
        let u = parse("what is a praline?", &mini_kb());
        assert_eq!(u.question_kind, QuestionKind::Definition);
        assert_eq!(u.terms.len(), 1);
        assert_eq!(u.terms[0].concept.as_deref(), Some("chocolate"));
    }

    #[test]
    fn other_cue_kinds() {
        let kb = mini_kb();
        assert_eq!(parse("does it contain nuts?", &kb).question_kind, QuestionKind::YesNo);
        assert_eq!(parse("how do i order?", &kb).question_kind, QuestionKind::Procedural);
        assert_eq!(parse("what is the price of dark chocolate with milk", &kb).question_kind, QuestionKind::Factoid);
        assert_eq!(parse("tell me about chocolate", &kb).question_kind, QuestionKind::Unknown);
        assert_eq!(parse("", &kb).question_kind, QuestionKind::Unknown);
    }

    #[test]
    fn pronoun_yields_unresolved_referential_term() {
        let u = parse("does it contain nuts?", &mini_kb());
        assert_eq!(u.terms.len(), 1);
        let t = &u.terms[0];
        assert!(t.referential && t.unresolved && t.concept.is_none());
        assert_eq!(t.constraints, vec![Constraint::concept("contains", "nut")]);
    }

    #[test]
    fn arguments_attach_to_nearest_predicate() {
        let u = parse("do you sell pralines", &mini_kb());
        // chunks: VP[do] Other[you] VP[sell] NP[pralines]
        assert_eq!(u.clauses.len(), 2);
        assert_eq!(u.clauses[1].arguments, vec![3]);
        assert!(u.clauses[0].arguments.is_empty());
    }
}
