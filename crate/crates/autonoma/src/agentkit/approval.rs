//! Single-use approval tokens bound to a conversation and an action digest.

use std::collections::HashMap;
use std::sync::Mutex;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::RngCore;
use thiserror::Error;

pub const APPROVAL_TTL_MS: u64 = 10 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApprovalToken {
    pub value: String,
    pub conversation_id: String,
    pub action_digest: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("unknown approval token")]
    Unknown,
    #[error("approval token already used")]
    Used,
    #[error("approval token expired")]
    Expired,
    #[error("approval token bound to a different action")]
    Mismatch,
}

#[derive(Debug)]
struct Entry {
    conversation_id: String,
    action_digest: String,
    expires_at: u64,
    used: bool,
}

#[derive(Debug, Default)]
pub struct TokenStore {
    entries: Mutex<HashMap<String, Entry>>,
}

impl TokenStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue(&self, conversation_id: &str, action_digest: &str, now_ms: u64) -> ApprovalToken {
        let mut bytes = [0u8; 32];
        rand::rng().fill_bytes(&mut bytes);
        let value = URL_SAFE_NO_PAD.encode(bytes);
        let expires_at = now_ms + APPROVAL_TTL_MS;
        self.entries.lock().expect("token lock").insert(
            value.clone(),
            Entry {
                conversation_id: conversation_id.to_string(),
                action_digest: action_digest.to_string(),
                expires_at,
                used: false,
            },
        );
        ApprovalToken {
            value,
            conversation_id: conversation_id.to_string(),
            action_digest: action_digest.to_string(),
            expires_at,
        }
    }

    /// Validates and burns the token.
    pub fn consume(&self, token: &str, conversation_id: &str, action_digest: &str, now_ms: u64) -> Result<(), TokenError> {
        let mut entries = self.entries.lock().expect("token lock");
        let entry = entries.get_mut(token).ok_or(TokenError::Unknown)?;
        if entry.used {
            return Err(TokenError::Used);
        }
        if now_ms >= entry.expires_at {
            return Err(TokenError::Expired);
        }
        if entry.conversation_id != conversation_id || entry.action_digest != action_digest {
            return Err(TokenError::Mismatch);
        }
        entry.used = true;
        Ok(())
    }
}
