//! Shared test material: the confectioner fixture, brute-force oracles that
//! recompute results without the engine's data structures, synthetic
//! corpora and scripted dialogues.

pub mod corpora;
pub mod dialogues;
pub mod oracle;
pub mod splice;

use std::path::PathBuf;

use ctrlbot_core::control::Engine;
use ctrlbot_core::eval::{load_cases, QaCase};
use ctrlbot_core::knowledge::KnowledgeBase;

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// The 12-document confectioner knowledge base.
pub fn fixture_dir() -> PathBuf {
    fixtures_dir().join("confectioner")
}

/// The 20-question QA corpus for the confectioner knowledge base.
pub fn qa_path() -> PathBuf {
    fixtures_dir().join("qa.jsonl")
}

pub fn fixture_kb() -> KnowledgeBase {
    KnowledgeBase::load(fixture_dir()).expect("fixture knowledge base loads")
}

pub fn fixture_engine() -> Engine {
    Engine::new(fixture_kb())
}

pub fn qa_cases() -> Vec<QaCase> {
    load_cases(&qa_path()).expect("qa corpus parses")
}

/// Copies a directory tree (used to give tests a writable knowledge base).
pub fn copy_dir(from: &std::path::Path, to: &std::path::Path) -> std::io::Result<()> {
    std::fs::create_dir_all(to)?;
    for entry in std::fs::read_dir(from)? {
        let entry = entry?;
        let target = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &target)?;
        } else {
            std::fs::copy(entry.path(), target)?;
        }
    }
    Ok(())
}
