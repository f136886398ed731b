use super::{Chunk, ChunkKind, HeadPick, Rules, Token};
use crate::knowledge::Pos;

/// Longest-match, left-to-right chunking over parts of speech. Tokens no rule
/// covers become singleton `Other` chunks, so the result partitions `tokens`.
pub fn chunk(tokens: &[Token], rules: &Rules) -> Vec<Chunk> {
    let pos: Vec<Pos> = tokens.iter().map(|t| t.pos).collect();
    let mut chunks = Vec::new();
    let mut i = 0;
    while i < pos.len() {
        let mut best: Option<(usize, &super::ChunkRule)> = None;
        for rule in &rules.chunks {
            if let Some(&end) = rule.match_ends(&pos, i).last() {
                if best.is_none_or(|(b, _)| end > b) {
                    best = Some((end, rule));
                }
            }
        }
        match best {
            Some((end, rule)) => {
                let heads = (i..end).filter(|&j| pos[j] == rule.head_pos);
                let head = match rule.head_pick {
                    HeadPick::First => heads.min(),
                    HeadPick::Last => heads.max(),
                }
                .expect("head part of speech occurs in every match");
                chunks.push(Chunk {
                    kind: rule.kind,
                    start: i,
                    end,
                    head: head - i,
                });
                i = end;
            }
            None => {
                chunks.push(Chunk {
                    kind: ChunkKind::Other,
                    start: i,
                    end: i + 1,
                    head: 0,
                });
                i += 1;
            }
        }
    }
    chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlu::{analyze, test_support::mini_kb};

    fn chunks_of(text: &str) -> Vec<(ChunkKind, Vec<String>, String)> {
        let kb = mini_kb();
        let (_, tokens) = analyze(text, &kb.lexicon, &kb.rules, Some(&kb.ontology));
        chunk(&tokens, &kb.rules)
            .into_iter()
            .map(|c| {
                (
                    c.kind,
                    tokens[c.start..c.end].iter().map(|t| t.surface.clone()).collect(),
                    tokens[c.head_index()].surface.clone(),
                )
            })
            .collect()
    }

    #[test]
    fn single_noun_is_np() {
        assert_eq!(
            chunks_of("chocolate"),
            [(ChunkKind::NP, vec!["chocolate".to_string()], "chocolate".to_string())]
        );
    }

    #[test]
    fn question_chunks_traced_by_hand() {
        // do(Verb) you(Pronoun) sell(Verb) pralines(Noun):
        // Verb+ matches "do" only, Pronoun has no rule, Verb+ "sell", NP "pralines".
        let got: Vec<_> = chunks_of("do you sell pralines")
            .into_iter()
            .map(|(k, toks, _)| (k, toks.join(" ")))
            .collect();
        assert_eq!(
            got,
            [
                (ChunkKind::VP, "do".to_string()),
                (ChunkKind::Other, "you".to_string()),
                (ChunkKind::VP, "sell".to_string()),
                (ChunkKind::NP, "pralines".to_string()),
            ]
        );
    }

    #[test]
    fn empty_tokens() {
        assert!(chunk(&[], &mini_kb().rules).is_empty());
    }

    #[test]
    fn pp_prefers_longest_match() {
        let got = chunks_of("with the dark chocolate");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, ChunkKind::PP);
        assert_eq!(got[0].2, "chocolate");
    }
}
