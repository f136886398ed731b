//! Graded matching of parsed terms against fact sheets.
//!
//! Each query constraint is checked against a candidate sheet: a slot or
//! relation with a compatible value satisfies it, a missing slot leaves it
//! unverifiable, an incompatible value contradicts it. The resulting strength
//! is Conclusive (everything satisfied), Supportive (nothing contradicted but
//! something unverifiable) or None.

use std::cmp::Reverse;

use super::{Constraint, ConstraintValue, MatchResult, MatchStrength, ParsedUtterance, Term};
use crate::knowledge::{FactSheet, KnowledgeBase, Ontology, SlotValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Satisfied,
    Unverifiable,
    Contradicted,
}

fn text_matches(text: &str, expected: &ConstraintValue, ontology: &Ontology) -> bool {
    let text = text.trim().to_lowercase();
    match expected {
        ConstraintValue::Scalar(s) => {
            let s = s.trim().to_lowercase();
            text == s
                || matches!((text.parse::<f64>(), s.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
        }
        ConstraintValue::Concept(e) => ontology
            .concept_for_lemma(&text)
            .is_some_and(|c| ontology.compatible(c, e)),
    }
}

fn value_verdict(value: &SlotValue, expected: &ConstraintValue, ontology: &Ontology) -> Verdict {
    let ok = match value {
        SlotValue::List(items) => {
            if items.is_empty() {
                return Verdict::Unverifiable;
            }
            items
                .iter()
                .any(|item| value_verdict(item, expected, ontology) == Verdict::Satisfied)
        }
        SlotValue::Concept { concept } => match expected {
            ConstraintValue::Concept(e) => ontology.compatible(concept, e),
            ConstraintValue::Scalar(s) => {
                s.trim().eq_ignore_ascii_case(concept)
                    || ontology
                        .concept_for_lemma(s)
                        .is_some_and(|c| ontology.compatible(c, concept))
            }
        },
        SlotValue::Number(n) => text_matches(&n.to_string(), expected, ontology),
        SlotValue::Text(t) => text_matches(t, expected, ontology),
    };
    if ok {
        Verdict::Satisfied
    } else {
        Verdict::Contradicted
    }
}

fn check_constraint(constraint: &Constraint, sheet: &FactSheet, kb: &KnowledgeBase) -> Verdict {
    if let Some(value) = sheet.slots.get(&constraint.slot) {
        return value_verdict(value, &constraint.expected, &kb.ontology);
    }
    let mut relations = sheet.relations_named(&constraint.slot).peekable();
    if relations.peek().is_none() {
        return Verdict::Unverifiable;
    }
    let hit = relations.any(|r| match kb.factsheets.get(&r.target) {
        Some(target) => match &constraint.expected {
            ConstraintValue::Concept(e) => kb.ontology.compatible(&target.concept, e),
            ConstraintValue::Scalar(s) => {
                target.id.eq_ignore_ascii_case(s) || target.label.eq_ignore_ascii_case(s)
            }
        },
        None => false,
    });
    if hit {
        Verdict::Satisfied
    } else {
        Verdict::Contradicted
    }
}

fn classify(sheet: Option<&str>, unverifiable: &[Constraint], contradicted: &[Constraint]) -> MatchStrength {
    match sheet {
        None => MatchStrength::None,
        Some(_) if !contradicted.is_empty() => MatchStrength::None,
        Some(_) if !unverifiable.is_empty() => MatchStrength::Supportive,
        Some(_) => MatchStrength::Conclusive,
    }
}

/// Checks every constraint of `term` against one sheet.
pub fn evaluate_candidate(term: &Term, sheet: &FactSheet, kb: &KnowledgeBase) -> MatchResult {
    let mut result = MatchResult {
        strength: MatchStrength::None,
        sheet: Some(sheet.id.clone()),
        term: None,
        satisfied: Vec::new(),
        unverifiable: Vec::new(),
        contradicted: Vec::new(),
    };
    for c in &term.constraints {
        match check_constraint(c, sheet, kb) {
            Verdict::Satisfied => result.satisfied.push(c.clone()),
            Verdict::Unverifiable => result.unverifiable.push(c.clone()),
            Verdict::Contradicted => result.contradicted.push(c.clone()),
        }
    }
    result.strength = classify(result.sheet.as_deref(), &result.unverifiable, &result.contradicted);
    result
}

fn is_candidate(term_concept: &str, sheet: &FactSheet, ontology: &Ontology) -> bool {
    ontology.is_subconcept(&sheet.concept, term_concept).unwrap_or(false)
        || ontology.implications(term_concept).contains(&sheet.concept)
}

fn rank_key(r: &MatchResult) -> (MatchStrength, Reverse<usize>, usize, Option<String>) {
    (r.strength, Reverse(r.satisfied.len()), r.unverifiable.len(), r.sheet.clone())
}

/// Best candidate sheet for one term, ranked by strength, then most
/// satisfied, fewest unverifiable, smallest id.
pub fn best_for_term(term: &Term, kb: &KnowledgeBase) -> Option<MatchResult> {
    let concept = term.concept.as_deref()?;
    if term.unresolved {
        return None;
    }
    kb.factsheets
        .values()
        .filter(|s| is_candidate(concept, s, &kb.ontology))
        .map(|s| evaluate_candidate(term, s, kb))
        .min_by_key(rank_key)
}

/// Best match over all terms of the utterance. An unresolved referential
/// term forces `None`.
pub fn match_knowledge(utterance: &ParsedUtterance, kb: &KnowledgeBase) -> MatchResult {
    if utterance.terms.iter().any(|t| t.unresolved) {
        return MatchResult::none();
    }
    utterance
        .terms
        .iter()
        .enumerate()
        .filter_map(|(i, term)| {
            best_for_term(term, kb).map(|mut r| {
                r.term = Some(i);
                r
            })
        })
        .min_by_key(|r| (rank_key(r), r.term))
        .unwrap_or_else(MatchResult::none)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::SheetKind;
    use crate::nlu::test_support::mini_kb;
    use std::collections::BTreeMap;

    fn sheet(id: &str, concept: &str, slots: &[(&str, SlotValue)]) -> FactSheet {
        FactSheet {
            id: id.into(),
            kind: SheetKind::Kind,
            concept: concept.into(),
            label: id.into(),
            slots: slots.iter().cloned().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
            relations: Vec::new(),
            answer_text: None,
        }
    }

    fn kb_with(sheets: Vec<FactSheet>) -> KnowledgeBase {
        let mut kb = mini_kb();
        kb.factsheets = sheets.into_iter().map(|s| (s.id.clone(), s)).collect();
        kb
    }

    fn utterance_with(term: Term) -> ParsedUtterance {
        ParsedUtterance {
            raw: String::new(),
            normalized: String::new(),
            tokens: vec![],
            chunks: vec![],
            clauses: vec![],
            terms: vec![term],
            question_kind: crate::nlu::QuestionKind::Unknown,
        }
    }

    #[test]
    fn content_free_sheet_is_supportive() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[("price", SlotValue::Number(5.0))])]);
        let term = Term::new("chocolate", vec![Constraint::concept("contains", "nut")]);
        let m = match_knowledge(&utterance_with(term), &kb);
        assert_eq!(m.strength, MatchStrength::Supportive);
        assert_eq!(m.unverifiable, vec![Constraint::concept("contains", "nut")]);
    }

    #[test]
    fn no_constraints_is_conclusive() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[("price", SlotValue::Number(5.0))])]);
        let m = match_knowledge(&utterance_with(Term::new("chocolate", vec![])), &kb);
        assert_eq!(m.strength, MatchStrength::Conclusive);
        assert_eq!(m.sheet.as_deref(), Some("choc"));
    }

    #[test]
    fn disjoint_content_is_contradicted() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[("contains", SlotValue::concept("milk"))])]);
        let term = Term::new("chocolate", vec![Constraint::concept("contains", "nut")]);
        let m = match_knowledge(&utterance_with(term), &kb);
        assert_eq!(m.strength, MatchStrength::None);
        assert_eq!(m.contradicted, vec![Constraint::concept("contains", "nut")]);
    }

    #[test]
    fn clean_supportive_beats_contradicting_subconcept_sheet() {
        let kb = kb_with(vec![
            sheet("a-milk", "milk_chocolate", &[("contains", SlotValue::concept("milk"))]),
            sheet("b-choc", "chocolate", &[]),
        ]);
        let term = Term::new("chocolate", vec![Constraint::concept("contains", "nut")]);
        let m = match_knowledge(&utterance_with(term), &kb);
        assert_eq!(m.strength, MatchStrength::Supportive);
        assert_eq!(m.sheet.as_deref(), Some("b-choc"));
    }

    #[test]
    fn ties_break_on_smallest_id() {
        let kb = kb_with(vec![sheet("z", "chocolate", &[]), sheet("a", "dark_chocolate", &[])]);
        let m = match_knowledge(&utterance_with(Term::new("chocolate", vec![])), &kb);
        assert_eq!(m.sheet.as_deref(), Some("a"));
    }

    #[test]
    fn superconcept_sheets_are_not_candidates() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[])]);
        let m = match_knowledge(&utterance_with(Term::new("dark_chocolate", vec![])), &kb);
        assert_eq!(m.strength, MatchStrength::None);
        assert!(m.sheet.is_none());
    }

    #[test]
    fn implied_concepts_are_candidates() {
        let kb = kb_with(vec![sheet("food", "food", &[])]);
        let m = match_knowledge(&utterance_with(Term::new("chocolate", vec![])), &kb);
        assert_eq!(m.sheet.as_deref(), Some("food"));
    }

    #[test]
    fn unresolved_term_forces_none() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[])]);
        let mut term = Term::new("chocolate", vec![]);
        term.referential = true;
        term.unresolved = true;
        assert_eq!(match_knowledge(&utterance_with(term), &kb).strength, MatchStrength::None);
    }

    #[test]
    fn relation_targets_are_checked() {
        let mut s = sheet("choc", "chocolate", &[]);
        s.relations.push(crate::knowledge::Relation { name: "contains".into(), target: "milk-sheet".into() });
        let kb = kb_with(vec![s, sheet("milk-sheet", "milk", &[])]);
        let ok = Term::new("chocolate", vec![Constraint::concept("contains", "milk")]);
        let bad = Term::new("chocolate", vec![Constraint::concept("contains", "nut")]);
        assert_eq!(match_knowledge(&utterance_with(ok), &kb).strength, MatchStrength::Conclusive);
        assert_eq!(match_knowledge(&utterance_with(bad), &kb).strength, MatchStrength::None);
    }

    #[test]
    fn scalar_constraints_compare_normalized_values() {
        let kb = kb_with(vec![sheet("choc", "chocolate", &[("price", SlotValue::Number(5.0))])]);
        let c = |v: &str| Constraint { slot: "price".into(), expected: ConstraintValue::Scalar(v.into()) };
        let m = match_knowledge(&utterance_with(Term::new("chocolate", vec![c("5")])), &kb);
        assert_eq!(m.strength, MatchStrength::Conclusive);
        let m = match_knowledge(&utterance_with(Term::new("chocolate", vec![c("7")])), &kb);
        assert_eq!(m.strength, MatchStrength::None);
    }
}
