//! Publication of snapshots to readers and stream subscribers.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};

use thiserror::Error;
use tokio::sync::broadcast;

use crate::snapshot::AnalyticsSnapshot;

/// Snapshots kept for `GET /api/snapshot/{version}`.
pub const HISTORY_LEN: usize = 50;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PublishError {
    #[error("version {offered} is not newer than published version {current}")]
    NotNewer { offered: u64, current: u64 },
}

struct State {
    latest: Arc<AnalyticsSnapshot>,
    history: VecDeque<Arc<AnalyticsSnapshot>>,
}

/// Holds the current snapshot and fans version changes out to subscribers.
///
/// Readers clone an `Arc` under a short read lock, so they always see a
/// whole published snapshot. Each subscriber has a bounded queue; one that
/// falls behind gets [`broadcast::error::RecvError::Lagged`] and is
/// expected to resync from the latest snapshot.
pub struct SnapshotHub {
    state: RwLock<State>,
    tx: broadcast::Sender<u64>,
}

impl SnapshotHub {
    pub fn new(initial: AnalyticsSnapshot, buffer: usize) -> Self {
        let initial = Arc::new(initial);
        let (tx, _) = broadcast::channel(buffer.max(1));
        SnapshotHub {
            state: RwLock::new(State {
                latest: initial.clone(),
                history: VecDeque::from([initial]),
            }),
            tx,
        }
    }

    pub fn latest(&self) -> Arc<AnalyticsSnapshot> {
        self.state.read().expect("hub lock poisoned").latest.clone()
    }

    pub fn get(&self, version: u64) -> Option<Arc<AnalyticsSnapshot>> {
        let state = self.state.read().expect("hub lock poisoned");
        state.history.iter().find(|s| s.version == version).cloned()
    }

    pub fn history_versions(&self) -> Vec<u64> {
        let state = self.state.read().expect("hub lock poisoned");
        state.history.iter().map(|s| s.version).collect()
    }

    pub fn publish(&self, snapshot: AnalyticsSnapshot) -> Result<(), PublishError> {
        let mut state = self.state.write().expect("hub lock poisoned");
        if snapshot.version <= state.latest.version {
            return Err(PublishError::NotNewer {
                offered: snapshot.version,
                current: state.latest.version,
            });
        }
        let version = snapshot.version;
        let snapshot = Arc::new(snapshot);
        state.latest = snapshot.clone();
        state.history.push_back(snapshot);
        while state.history.len() > HISTORY_LEN {
            state.history.pop_front();
        }
        // Sent under the write lock so a concurrent subscribe() sees either
        // the old snapshot plus this notification, or the new snapshot
        // without it.
        let _ = self.tx.send(version);
        Ok(())
    }

    /// Current snapshot plus a receiver for every later version.
    pub fn subscribe(&self) -> (Arc<AnalyticsSnapshot>, broadcast::Receiver<u64>) {
        let state = self.state.read().expect("hub lock poisoned");
        (state.latest.clone(), self.tx.subscribe())
    }

    pub fn subscriber_count(&self) -> usize {
        self.tx.receiver_count()
    }
}
