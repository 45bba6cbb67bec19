//! QR pairing: host-issued bearer tokens, each bound to the first client
//! that presents it.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use rand::RngCore;
use thiserror::Error;
use tokio::time::Instant;

pub const TOKEN_BYTES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("missing bearer token")]
    Missing,
    #[error("unknown token")]
    Unknown,
    #[error("token expired")]
    Expired,
    #[error("token is bound to another client")]
    BoundToOther,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairingSession {
    /// 32 random bytes, base64url without padding.
    pub token: String,
    pub issued_at: Instant,
    pub ttl: Duration,
    pub bound_client: Option<String>,
}

impl PairingSession {
    pub fn expired_at(&self, now: Instant) -> bool {
        now.duration_since(self.issued_at) >= self.ttl
    }
}

#[derive(Debug)]
pub struct PairingRegistry {
    ttl: Duration,
    sessions: Mutex<HashMap<String, PairingSession>>,
}

impl PairingRegistry {
    pub fn new(ttl: Duration) -> Self {
        PairingRegistry { ttl, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Issues a fresh token. Only the host console calls this.
    pub fn issue(&self) -> PairingSession {
        let mut bytes = [0u8; TOKEN_BYTES];
        rand::rng().fill_bytes(&mut bytes);
        let session =
            PairingSession { token: URL_SAFE_NO_PAD.encode(bytes), issued_at: Instant::now(), ttl: self.ttl, bound_client: None };
        let mut sessions = self.sessions.lock().expect("pairing lock");
        let now = Instant::now();
        sessions.retain(|_, s| !s.expired_at(now));
        sessions.insert(session.token.clone(), session.clone());
        session
    }

    /// Checks `token` for `client`, binding it on first use.
    pub fn authenticate(&self, token: Option<&str>, client: &str) -> Result<(), AuthError> {
        let token = token.filter(|t| !t.is_empty()).ok_or(AuthError::Missing)?;
        let mut sessions = self.sessions.lock().expect("pairing lock");
        let session = sessions.get_mut(token).ok_or(AuthError::Unknown)?;
        if session.expired_at(Instant::now()) {
            sessions.remove(token);
            return Err(AuthError::Expired);
        }
        match &session.bound_client {
            Some(owner) if owner != client => Err(AuthError::BoundToOther),
            Some(_) => Ok(()),
            None => {
                tracing::info!(client, "pairing token bound");
                session.bound_client = Some(client.to_string());
                Ok(())
            }
        }
    }

    pub fn session(&self, token: &str) -> Option<PairingSession> {
        self.sessions.lock().expect("pairing lock").get(token).cloned()
    }
}

/// `autonoma://pair?host=<addr>&port=<p>&token=<t>`; IPv6 hosts are
/// bracketed.
pub fn qr_payload(host: std::net::IpAddr, port: u16, token: &str) -> String {
    let host = match host {
        std::net::IpAddr::V6(v6) => format!("[{v6}]"),
        v4 => v4.to_string(),
    };
    format!("autonoma://pair?host={host}&port={port}&token={token}")
}
