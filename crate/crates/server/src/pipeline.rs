//! The single-writer event log, its debouncer, and the recompute worker.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use classroom_core::domain::DomainError;
use classroom_core::ingest::{replay, ReplayError, ReplayPlan, ReplayReport, SystemClock};
use classroom_core::recommend::AlertRule;
use classroom_core::{ActivityEvent, ActivitySpec, EventKind, EventLog, IncomingEvent, IncomingKind};
use serde::Serialize;
use tokio::sync::Notify;
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::config::{AnalyticsConfig, ConfigError};
use crate::debounce::Debouncer;
use crate::hub::SnapshotHub;
use crate::snapshot::{now_ms, recompute, AnalyticsSnapshot, RecomputeJob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestAck {
    pub seq: u64,
    pub events_seen: usize,
}

/// Event log plus recompute scheduling. Not thread-safe by itself; the
/// [`Engine`] keeps it behind a mutex so there is one logical writer.
#[derive(Debug)]
pub struct Pipeline {
    spec: Arc<ActivitySpec>,
    log: EventLog,
    debouncer: Debouncer,
    next_version: u64,
}

impl Pipeline {
    /// Version 0 is the empty bootstrap snapshot; recomputes start at 1.
    pub fn new(spec: ActivitySpec, debounce_ms: u64) -> Self {
        Pipeline {
            spec: Arc::new(spec.clone()),
            log: EventLog::new(spec),
            debouncer: Debouncer::new(debounce_ms),
            next_version: 1,
        }
    }

    pub fn spec(&self) -> &Arc<ActivitySpec> {
        &self.spec
    }

    pub fn events(&self) -> &[ActivityEvent] {
        self.log.events()
    }

    pub fn ingest(&mut self, ev: IncomingEvent, now_ms: u64) -> Result<IngestAck, DomainError> {
        let seq = self.log.ingest(ev, now_ms)?.seq;
        self.debouncer.note_event();
        Ok(IngestAck {
            seq,
            events_seen: self.log.len(),
        })
    }

    /// A job over the current log if the debouncer allows one now.
    pub fn poll(&mut self, now_ms: u64) -> Option<RecomputeJob> {
        if !self.debouncer.poll(now_ms) {
            return None;
        }
        let version = self.next_version;
        self.next_version += 1;
        Some(RecomputeJob {
            version,
            spec: self.spec.clone(),
            events: self.log.events().to_vec(),
        })
    }

    pub fn deadline(&self) -> Option<u64> {
        self.debouncer.deadline()
    }
}

/// Replayed events carry their own seq and timestamp; the live log assigns
/// fresh ones, so only the identity and kind are forwarded.
pub fn incoming_from(ev: &ActivityEvent) -> IncomingEvent {
    IncomingEvent {
        student_id: ev.student_id.clone(),
        question_id: ev.question_id.clone(),
        kc_id: None,
        kind: match ev.kind {
            EventKind::Response { correct } => IncomingKind::Response { correct },
            EventKind::Hint { ordinal } => IncomingKind::Hint { ordinal: Some(ordinal) },
        },
    }
}

struct Shared {
    pipeline: Mutex<Pipeline>,
    hub: SnapshotHub,
    wake: Notify,
    config: AnalyticsConfig,
    rules: Vec<AlertRule>,
    started: Instant,
}

/// Owns the pipeline and the background recompute worker. Cheap to clone.
#[derive(Clone)]
pub struct Engine {
    shared: Arc<Shared>,
}

impl Engine {
    /// Publishes the bootstrap snapshot and spawns the worker on the current
    /// tokio runtime.
    pub fn start(
        spec: ActivitySpec,
        config: AnalyticsConfig,
        debounce_ms: u64,
        stream_buffer: usize,
    ) -> Result<(Engine, JoinHandle<()>), ConfigError> {
        let rules = config.rules()?;
        let initial = recompute(0, &[], &spec, &config, &rules, None, now_ms());
        let shared = Arc::new(Shared {
            pipeline: Mutex::new(Pipeline::new(spec, debounce_ms)),
            hub: SnapshotHub::new(initial, stream_buffer),
            wake: Notify::new(),
            config,
            rules,
            started: Instant::now(),
        });
        let engine = Engine { shared };
        let worker = tokio::spawn(engine.clone().run_worker());
        Ok((engine, worker))
    }

    fn now_ms(&self) -> u64 {
        self.shared.started.elapsed().as_millis() as u64
    }

    pub fn hub(&self) -> &SnapshotHub {
        &self.shared.hub
    }

    pub fn spec(&self) -> Arc<ActivitySpec> {
        self.lock().spec().clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Pipeline> {
        self.shared.pipeline.lock().expect("pipeline lock poisoned")
    }

    pub fn ingest(&self, ev: IncomingEvent) -> Result<IngestAck, DomainError> {
        let now = self.now_ms();
        let ack = self.lock().ingest(ev, now)?;
        self.shared.wake.notify_one();
        Ok(ack)
    }

    pub fn events_seen(&self) -> usize {
        self.lock().events().len()
    }

    async fn run_worker(self) {
        loop {
            let now = self.now_ms();
            let (job, deadline) = {
                let mut p = self.lock();
                let job = p.poll(now);
                (job, p.deadline())
            };
            if let Some(job) = job {
                let shared = self.shared.clone();
                let built = tokio::task::spawn_blocking(move || {
                    let previous = shared.hub.latest();
                    job.run(&shared.config, &shared.rules, Some(&previous))
                })
                .await;
                match built {
                    Ok(snapshot) => {
                        tracing::debug!(version = snapshot.version, events = snapshot.events_seen, "publishing");
                        if let Err(e) = self.shared.hub.publish(snapshot) {
                            tracing::error!(error = %e, "publish rejected");
                        }
                    }
                    Err(e) => tracing::error!(error = %e, "recompute task failed"),
                }
                continue;
            }
            match deadline {
                Some(due) => {
                    let wait = Duration::from_millis(due.saturating_sub(now));
                    tokio::select! {
                        _ = tokio::time::sleep(wait) => {}
                        _ = self.shared.wake.notified() => {}
                    }
                }
                None => self.shared.wake.notified().await,
            }
        }
    }

    /// Streams `plan` into the log on a blocking thread, in real time.
    pub fn spawn_replay(&self, plan: ReplayPlan) -> JoinHandle<Result<ReplayReport, ReplayError>> {
        let engine = self.clone();
        tokio::task::spawn_blocking(move || {
            let mut sink = |ev: &ActivityEvent| engine.ingest(incoming_from(ev)).map(|_| ()).map_err(|e| e.to_string());
            replay(&plan, &mut sink, &mut SystemClock::start())
        })
    }

    /// Resolves once a snapshot covering at least `events` events is
    /// published, returning it.
    pub async fn wait_for_coverage(&self, events: usize) -> Arc<AnalyticsSnapshot> {
        let (mut current, mut rx) = self.hub().subscribe();
        loop {
            if current.events_seen >= events {
                return current;
            }
            match rx.recv().await {
                Ok(_) | Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => current = self.hub().latest(),
                Err(tokio::sync::broadcast::error::RecvError::Closed) => return self.hub().latest(),
            }
        }
    }
}
