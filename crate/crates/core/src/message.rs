use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Conversation participant roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Coordinator,
    Planner,
    Supervisor,
    Agent,
    Reporter,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::Coordinator => "coordinator",
            Role::Planner => "planner",
            Role::Supervisor => "supervisor",
            Role::Agent => "agent",
            Role::Reporter => "reporter",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Coarse language tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lang {
    En,
    Ar,
    #[default]
    Und,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Ar => "ar",
            Lang::Und => "und",
        }
    }
}

/// Reference to an artifact stored under a conversation's artifact
/// directory, as a `/`-separated relative path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactRef(pub String);

impl ArtifactRef {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Contextual cues carried alongside a message. `urgency` is recorded when a
/// client supplies it; nothing schedules on it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MessageMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub urgency: Option<String>,
}

impl MessageMeta {
    pub fn is_empty(&self) -> bool {
        self.urgency.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub id: String,
    pub role: Role,
    pub content: String,
    pub lang: Lang,
    #[serde(default)]
    pub attachments: Vec<ArtifactRef>,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "MessageMeta::is_empty")]
    pub meta: MessageMeta,
}

impl Message {
    pub fn new(id: impl Into<String>, role: Role, content: impl Into<String>, lang: Lang, timestamp: u64) -> Self {
        Message {
            id: id.into(),
            role,
            content: content.into(),
            lang,
            attachments: Vec::new(),
            timestamp,
            meta: MessageMeta::default(),
        }
    }
}
