use std::collections::BTreeMap;

use unicode_normalization::UnicodeNormalization;

use super::Token;
use crate::knowledge::Pos;

fn joins_word(prev: Option<char>, c: char, next: Option<char>) -> bool {
    match (prev, next) {
        (Some(p), Some(n)) => {
            (c == '\'' && p.is_alphabetic() && n.is_alphabetic())
                || ((c == '.' || c == ',') && p.is_ascii_digit() && n.is_ascii_digit())
        }
        _ => false,
    }
}

/// NFKC-normalizes and lowercases `text`, then splits it into word and
/// punctuation tokens. Spans are character offsets into the returned text.
///
/// Words are runs of alphanumeric characters; an apostrophe between letters
/// (`don't`) or a point/comma between digits (`5.50`) stays inside the word.
/// Every other non-space character is a single punctuation token.
pub fn preprocess(text: &str) -> (String, Vec<Token>) {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    let chars: Vec<char> = normalized.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_alphanumeric() {
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                if c.is_alphanumeric()
                    || joins_word(chars.get(i.wrapping_sub(1)).copied(), c, chars.get(i + 1).copied())
                {
                    i += 1;
                } else {
                    break;
                }
            }
        } else {
            i += 1;
        }
        let surface: String = chars[start..i].iter().collect();
        tokens.push(Token {
            lemma: surface.clone(),
            surface,
            pos: Pos::Other,
            features: BTreeMap::new(),
            concept: None,
            span: (start, i),
        });
    }
    (normalized, tokens)
}
