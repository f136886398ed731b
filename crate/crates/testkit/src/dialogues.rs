//! Scripted multi-turn conversations over the confectioner fixture.

use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use ctrlbot_core::control::{ControlConfig, ConversationState, Engine, RoutingTrace};
use ctrlbot_core::generation::{BackendError, CountingBackend, ExtractiveBackend, LlmBackend, Prompt, MOCK_BACKEND_ID};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Ten dialogues. The first, third and eighth contain a turn whose best
/// rule match is Supportive.
pub const DIALOGUES: &[&[&str]] = &[
    &["Tell me about dark chocolate.", "Does it contain nuts?"],
    &["Do you sell chocolate containing nuts?", "Who founded the shop?"],
    &["Do you sell pralines?", "Do you sell schokolade with nuss?"],
    &["What is shipping?", "Can I return a damaged parcel?"],
    &["Hello there", "xyzzy", "Where does your milk come from?"],
    &["Tell me about milk chocolate.", "Does it contain milk?", "Does it contain nuts?"],
    &["How should I store the bars?", "Tell me about delivery."],
    &["Where do the cocoa beans come from?", "Does dark chocolate contain nuts?"],
    &["Do you have a phone number?", "When is the tasting workshop?"],
    &["Tell me about nuts.", "Do you sell chocolate with nuts?", "Does it contain milk?"],
];

/// Utterances used for random turn sequences.
pub const UTTERANCE_POOL: &[&str] = &[
    "How much does dark chocolate cost?",
    "Tell me about milk chocolate.",
    "Do you sell pralines?",
    "Do you sell chocolate containing nuts?",
    "What is shipping?",
    "Does it contain nuts?",
    "Does it contain milk?",
    "Where does your milk come from?",
    "Can I return a damaged parcel?",
    "How should I store the bars?",
    "Who founded the shop?",
    "Is there a vegan chocolate?",
    "Hello there",
    "xyzzy",
    "",
    "What do the nuts cost?",
    "Tell me about delivery.",
    "Do you have a phone number?",
];

/// Fixture engine whose mock backend counts its calls.
pub fn counting_engine() -> (Engine, Arc<AtomicUsize>) {
    let mut engine = crate::fixture_engine();
    let counting = CountingBackend::new(Arc::new(ExtractiveBackend::new(Arc::clone(engine.lemmatizer()))));
    let counter = counting.counter();
    engine.backends_mut().register(Arc::new(counting));
    (engine, counter)
}

/// Registered as the mock id; every completion fails with `error`.
pub struct FailingBackend(pub BackendError);

impl LlmBackend for FailingBackend {
    fn id(&self) -> &str {
        MOCK_BACKEND_ID
    }

    fn complete(&self, _: &Prompt, _: f64) -> Result<String, BackendError> {
        Err(self.0.clone())
    }

    fn health(&self) -> Result<(), BackendError> {
        Err(self.0.clone())
    }
}

fn epoch() -> chrono::DateTime<chrono::Utc> {
    chrono::DateTime::<chrono::Utc>::UNIX_EPOCH
}

/// Runs `turns` in one fresh session and returns the traces.
pub fn run_dialogue(engine: &Engine, turns: &[&str], config: &ControlConfig) -> Vec<RoutingTrace> {
    let mut state = ConversationState::new("dialogue", epoch());
    turns
        .iter()
        .map(|t| engine.handle_turn_at(&mut state, t, config, epoch()).trace)
        .collect()
}

/// Indices of the turns routed to retrieval (with or without generation).
pub fn rag_turns(engine: &Engine, turns: &[&str], config: &ControlConfig) -> Vec<usize> {
    run_dialogue(engine, turns, config)
        .iter()
        .enumerate()
        .filter(|(_, t)| t.path.is_rag())
        .map(|(i, _)| i)
        .collect()
}

/// `n` turns drawn from [`UTTERANCE_POOL`] in one session.
pub fn fuzz_session(engine: &Engine, config: &ControlConfig, n: usize, seed: u64) -> Vec<RoutingTrace> {
    let mut rng = StdRng::seed_from_u64(seed);
    let turns: Vec<&str> = (0..n).map(|_| *UTTERANCE_POOL.choose(&mut rng).unwrap()).collect();
    run_dialogue(engine, &turns, config)
}
