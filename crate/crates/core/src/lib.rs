//! Hybrid rule-based and retrieval-augmented question answering with
//! per-request control over retrieval and generation.

pub mod control;
pub mod eval;
pub mod generation;
pub mod knowledge;
pub mod nlu;
pub mod retrieval;
