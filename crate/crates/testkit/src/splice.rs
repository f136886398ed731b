//! Foreign-lemma splicing for the grounding checker.

use ctrlbot_core::control::{ControlConfig, ConversationState, Engine, RoutePath};
use ctrlbot_core::eval::QaCase;
use ctrlbot_core::generation::{check_grounding, Prompt};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Prompt and answer of every RagGenerated turn over `cases`.
pub fn generated_turns(engine: &Engine, cases: &[QaCase], config: &ControlConfig) -> Vec<(Prompt, String)> {
    let epoch = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    let mut out = Vec::new();
    for case in cases {
        let mut state = ConversationState::new(format!("splice-{}", case.id), epoch);
        for prior in &case.prior_turns {
            engine.handle_turn_at(&mut state, prior, config, epoch);
        }
        let outcome = engine.handle_turn_at(&mut state, &case.question, config, epoch);
        if outcome.trace.path == RoutePath::RagGenerated {
            if let Some(p) = outcome.trace.prompt {
                out.push((p, outcome.answer));
            }
        }
    }
    out
}


/// A lowercase word that appears nowhere in the prompt.
pub fn foreign_word(rng: &mut StdRng, prompt: &Prompt) -> String {
    let haystack = prompt.render().to_lowercase();
    loop {
        let len = rng.gen_range(4..9);
        let tail: String = (0..len).map(|_| rng.gen_range(b'a'..=b'z') as char).collect();
        let word = format!("zq{tail}");
        if !haystack.contains(&word) {
            return word;
        }
    }
}

/// Inserts `word` at a random word boundary of `answer`.
pub fn splice(rng: &mut StdRng, answer: &str, word: &str) -> String {
    let mut words: Vec<&str> = answer.split(' ').collect();
    let at = rng.gen_range(0..=words.len());
    words.insert(at, word);
    words.join(" ")
}

/// Runs `trials` splices over `turns`; returns how many were flagged with a
/// span containing the spliced word.
pub fn splice_trials(engine: &Engine, turns: &[(Prompt, String)], trials: usize, seed: u64) -> usize {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut flagged = 0;
    for _ in 0..trials {
        let (prompt, answer) = turns.choose(&mut rng).expect("at least one generated turn");
        let word = foreign_word(&mut rng, prompt);
        let spliced = splice(&mut rng, answer, &word);
        let report = check_grounding(&spliced, prompt, engine.lemmatizer());
        if !report.grounded && report.ungrounded_spans.iter().any(|s| s.to_lowercase().contains(&word)) {
            flagged += 1;
        }
    }
    flagged
}
