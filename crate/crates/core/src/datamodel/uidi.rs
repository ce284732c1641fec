use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Timestamp;

/// The five UIDI message topics. Decoding any other string fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    /// Sensed data; the only topic that mutates documents.
    Input,
    Output,
    Setting,
    Command,
    State,
}

impl Topic {
    pub const ALL: [Topic; 5] = [Topic::Input, Topic::Output, Topic::Setting, Topic::Command, Topic::State];

    pub fn as_str(&self) -> &'static str {
        match self {
            Topic::Input => "input",
            Topic::Output => "output",
            Topic::Setting => "setting",
            Topic::Command => "command",
            Topic::State => "state",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UidiMessage {
    pub node_id: String,
    pub topic: Topic,
    #[serde(default)]
    pub payload: BTreeMap<String, Value>,
    pub sent_at: Timestamp,
}

impl UidiMessage {
    pub fn input(node_id: impl Into<String>, sent_at: Timestamp) -> Self {
        Self {
            node_id: node_id.into(),
            topic: Topic::Input,
            payload: BTreeMap::new(),
            sent_at,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }
}
