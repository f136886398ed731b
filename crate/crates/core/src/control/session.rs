use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::nlu::EntityRef;

pub const DEFAULT_MAX_IDLE: Duration = Duration::minutes(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationState {
    pub session_id: String,
    pub history: Vec<TurnRecord>,
    /// Mentioned entities, most recent last.
    pub entities: Vec<EntityRef>,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    /// Turns handled so far; the next turn gets this number plus one.
    pub turns: u64,
}

impl ConversationState {
    pub fn new(session_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self {
            session_id: session_id.into(),
            history: Vec::new(),
            entities: Vec::new(),
            created_at: now,
            last_active: now,
            turns: 0,
        }
    }

    /// Forgets history and entities. The turn counter keeps running so turn
    /// ids stay unique within the session.
    pub fn reset(&mut self) {
        self.history.clear();
        self.entities.clear();
    }
}

/// Sessions keyed by id. Each session sits behind its own lock, so turns of
/// one session run one at a time while different sessions proceed in
/// parallel.
#[derive(Debug, Default)]
pub struct SessionStore {
    sessions: Mutex<BTreeMap<String, Arc<Mutex<ConversationState>>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn map(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Arc<Mutex<ConversationState>>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Existing session, or a new one under `id`.
    pub fn get_or_create(&self, id: &str, now: DateTime<Utc>) -> Arc<Mutex<ConversationState>> {
        Arc::clone(
            self.map()
                .entry(id.to_string())
                .or_insert_with(|| Arc::new(Mutex::new(ConversationState::new(id, now)))),
        )
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<ConversationState>>> {
        self.map().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.map().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Removes sessions idle for strictly longer than `max_idle`. Sessions
    /// busy with a turn are never evicted.
    pub fn expire_sessions(&self, now: DateTime<Utc>, max_idle: Duration) -> usize {
        let mut map = self.map();
        let before = map.len();
        map.retain(|_, session| match session.try_lock() {
            Ok(state) => now - state.last_active <= max_idle,
            Err(_) => true,
        });
        before - map.len()
    }
}
