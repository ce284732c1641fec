use std::collections::{HashMap, VecDeque};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub answer: String,
}

/// Recent turns per session, newest last. Each session keeps at most
/// `window` turns.
#[derive(Debug)]
pub struct SessionStore {
    window: usize,
    sessions: Mutex<HashMap<String, VecDeque<Turn>>>,
}

pub const DEFAULT_HISTORY_TURNS: usize = 4;

impl Default for SessionStore {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY_TURNS)
    }
}

impl SessionStore {
    pub fn new(window: usize) -> Self {
        Self { window, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn history(&self, session_id: &str) -> Vec<Turn> {
        self.sessions.lock().get(session_id).map(|t| t.iter().cloned().collect()).unwrap_or_default()
    }

    pub fn record(&self, session_id: &str, turn: Turn) {
        if self.window == 0 {
            return;
        }
        let mut sessions = self.sessions.lock();
        let turns = sessions.entry(session_id.to_string()).or_default();
        turns.push_back(turn);
        while turns.len() > self.window {
            turns.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// History as prompt text, oldest first.
pub fn render_history(turns: &[Turn]) -> String {
    if turns.is_empty() {
        return "(none)".into();
    }
    turns.iter().map(|t| format!("User: {}\nAssistant: {}", t.query, t.answer)).collect::<Vec<_>>().join("\n")
}
