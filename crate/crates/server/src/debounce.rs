//! Recompute throttling.
//!
//! The first event after an idle period triggers a recompute straight away.
//! Later events mark work as pending, and the pending work runs once the
//! interval since the last recompute has elapsed. So recomputes run at most
//! once per interval while events keep arriving, the last event is always
//! followed by one, and it starts no later than one interval after that
//! event. Times are milliseconds on any monotonic clock.

#[derive(Debug, Clone)]
pub struct Debouncer {
    interval_ms: u64,
    last_fire: Option<u64>,
    pending: bool,
}

impl Debouncer {
    pub fn new(interval_ms: u64) -> Self {
        Debouncer {
            interval_ms,
            last_fire: None,
            pending: false,
        }
    }

    pub fn interval_ms(&self) -> u64 {
        self.interval_ms
    }

    pub fn is_pending(&self) -> bool {
        self.pending
    }

    pub fn note_event(&mut self) {
        self.pending = true;
    }

    /// Earliest time a pending recompute may start, or `None` when nothing
    /// is pending.
    pub fn deadline(&self) -> Option<u64> {
        self.pending
            .then(|| self.last_fire.map_or(0, |t| t.saturating_add(self.interval_ms)))
    }

    /// Returns true, and records the firing, if a recompute should start now.
    pub fn poll(&mut self, now_ms: u64) -> bool {
        match self.deadline() {
            Some(due) if now_ms >= due => {
                self.pending = false;
                self.last_fire = Some(now_ms);
                true
            }
            _ => false,
        }
    }
}
