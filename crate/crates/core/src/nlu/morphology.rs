use super::{Rules, Token};
use crate::knowledge::{Lexicon, LexiconEntry, Ontology, Pos};

fn apply_entry(token: &mut Token, entry: &LexiconEntry, ontology: Option<&Ontology>) {
    token.lemma = entry.lemma.clone();
    token.pos = entry.pos;
    token.features = entry.features.clone();
    token.concept = entry
        .concept
        .clone()
        .or_else(|| ontology.and_then(|o| o.concept_for_lemma(&entry.lemma)).map(str::to_string));
}

/// Fills lemma, part of speech, features and concept for each token.
///
/// Exact surface lookup first; otherwise the suffix rules are tried in order
/// and the first whose stripped form is in the lexicon wins (its features are
/// merged over the entry's). Tokens that still miss keep their surface as
/// lemma with `Pos::Other` and no concept.
pub fn analyze_morphology(
    tokens: &mut [Token],
    lexicon: &Lexicon,
    rules: &Rules,
    ontology: Option<&Ontology>,
) {
    for token in tokens.iter_mut() {
        if let Some(entry) = lexicon.lookup(&token.surface) {
            apply_entry(token, entry, ontology);
            continue;
        }
        let stripped = rules.suffixes.iter().find_map(|rule| {
            let stem = token.surface.strip_suffix(rule.suffix.as_str())?;
            if stem.is_empty() {
                return None;
            }
            let candidate = format!("{stem}{}", rule.replacement);
            lexicon.lookup(&candidate).map(|entry| (entry, rule))
        });
        match stripped {
            Some((entry, rule)) => {
                apply_entry(token, entry, ontology);
                for (k, v) in &rule.features {
                    token.features.insert(k.clone(), v.clone());
                }
            }
            None => {
                token.lemma = token.surface.clone();
                token.pos = Pos::Other;
                token.features.clear();
                token.concept = None;
            }
        }
    }
}
