//! Deterministic millisecond-step harness around the pipeline, hub and
//! subscriber queues, with no tokio timers involved.

use classroom_server::config::AnalyticsConfig;
use classroom_server::hub::SnapshotHub;
use classroom_server::snapshot::{recompute, RecomputeJob};
use classroom_server::Pipeline;
use tokio::sync::broadcast::error::TryRecvError;
use tokio::sync::broadcast::Receiver;

use super::{nth_event, small_spec};

pub struct Scenario {
    pub students: usize,
    /// Arrival time of each event, non-decreasing.
    pub arrivals: Vec<u64>,
    pub interval_ms: u64,
    /// How long a recompute occupies the worker.
    pub recompute_ms: u64,
    /// Times at which a new subscriber connects.
    pub joins: Vec<u64>,
    pub buffer: usize,
}

#[derive(Debug, Default)]
pub struct Subscriber {
    pub joined_at: u64,
    /// Version of the snapshot handed over on connect.
    pub initial: u64,
    /// Latest published version at connect time.
    pub latest_at_join: u64,
    pub versions: Vec<u64>,
    pub resyncs: usize,
}

#[derive(Debug)]
pub struct Publication {
    pub at: u64,
    pub version: u64,
    pub events_seen: usize,
}

#[derive(Debug)]
pub struct SimReport {
    pub total: usize,
    pub last_arrival: Option<u64>,
    pub publications: Vec<Publication>,
    pub subscribers: Vec<Subscriber>,
}

impl SimReport {
    /// Time from the last arrival to the first snapshot covering every event.
    pub fn coverage_lag(&self) -> Option<u64> {
        let last = self.last_arrival?;
        self.publications
            .iter()
            .find(|p| p.events_seen == self.total)
            .map(|p| p.at - last)
    }

    pub fn recomputes(&self) -> usize {
        self.publications.len()
    }
}

pub fn run(s: &Scenario) -> SimReport {
    let spec = small_spec(s.students);
    let config = AnalyticsConfig::default();
    let rules = config.rules().unwrap();
    let mut pipeline = Pipeline::new(spec.clone(), s.interval_ms);
    let hub = SnapshotHub::new(recompute(0, &[], &spec, &config, &rules, None, 0), s.buffer);

    let end = s.arrivals.last().copied().unwrap_or(0) + 3 * (s.interval_ms + s.recompute_ms) + 10;
    let mut next_event = 0;
    let mut next_join = 0;
    let mut running: Option<(u64, RecomputeJob)> = None;
    let mut subs: Vec<(Subscriber, Receiver<u64>)> = Vec::new();
    let mut publications = Vec::new();

    for t in 0..=end {
        while next_event < s.arrivals.len() && s.arrivals[next_event] == t {
            pipeline.ingest(nth_event(next_event, s.students), t).unwrap();
            next_event += 1;
        }
        if let Some((done_at, _)) = &running {
            if *done_at == t {
                let (_, job) = running.take().unwrap();
                let prev = hub.latest();
                let snap = job.run(&config, &rules, Some(&prev));
                publications.push(Publication {
                    at: t,
                    version: snap.version,
                    events_seen: snap.events_seen,
                });
                hub.publish(snap).unwrap();
            }
        }
        if running.is_none() {
            if let Some(job) = pipeline.poll(t) {
                running = Some((t + s.recompute_ms, job));
                // a zero-cost recompute publishes in the same tick
                if s.recompute_ms == 0 {
                    let (_, job) = running.take().unwrap();
                    let prev = hub.latest();
                    let snap = job.run(&config, &rules, Some(&prev));
                    publications.push(Publication {
                        at: t,
                        version: snap.version,
                        events_seen: snap.events_seen,
                    });
                    hub.publish(snap).unwrap();
                }
            }
        }
        while next_join < s.joins.len() && s.joins[next_join] == t {
            let latest_at_join = hub.latest().version;
            let (snap, rx) = hub.subscribe();
            subs.push((
                Subscriber {
                    joined_at: t,
                    initial: snap.version,
                    latest_at_join,
                    versions: vec![snap.version],
                    resyncs: 0,
                },
                rx,
            ));
            next_join += 1;
        }
        // subscribers drain on odd ticks only, so bursts can back up
        if t % 2 == 1 || t == end {
            for (sub, rx) in subs.iter_mut() {
                loop {
                    match rx.try_recv() {
                        Ok(v) => sub.versions.push(v),
                        Err(TryRecvError::Lagged(_)) => {
                            // reconnect contract: fetch the latest snapshot
                            sub.resyncs += 1;
                            let (snap, fresh) = hub.subscribe();
                            *rx = fresh;
                            if snap.version > *sub.versions.last().unwrap() {
                                sub.versions.push(snap.version);
                            }
                        }
                        Err(_) => break,
                    }
                }
            }
        }
    }

    SimReport {
        total: s.arrivals.len(),
        last_arrival: s.arrivals.last().copied(),
        publications,
        subscribers: subs.into_iter().map(|(s, _)| s).collect(),
    }
}
