//! Millisecond clock shared by the engine, agents and the store.
//!
//! Built on `tokio::time::Instant`, so under a paused runtime
//! (`start_paused = true` or [`tokio::time::pause`]) every reading is
//! logical time and sleeps advance instantly.

use std::time::{SystemTime, UNIX_EPOCH};

use tokio::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct RuntimeClock {
    origin: Instant,
    origin_ms: u64,
}

impl RuntimeClock {
    /// Wall-clock mode: readings are Unix milliseconds.
    pub fn wall() -> Self {
        let origin_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        RuntimeClock { origin: Instant::now(), origin_ms }
    }

    /// Logical mode: readings start at 0 when the clock is created.
    pub fn logical() -> Self {
        RuntimeClock { origin: Instant::now(), origin_ms: 0 }
    }

    pub fn now_ms(&self) -> u64 {
        self.origin_ms + self.origin.elapsed().as_millis() as u64
    }

    /// Instant at which this clock reads `ms`.
    pub fn instant_at(&self, ms: u64) -> Instant {
        self.origin + std::time::Duration::from_millis(ms.saturating_sub(self.origin_ms))
    }

    pub fn is_logical(&self) -> bool {
        self.origin_ms == 0
    }
}
