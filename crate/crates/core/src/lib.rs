//! Live classroom analytics: an append-only stream of student activity
//! events, per-knowledge-component features, agglomerative clustering with
//! automatic linkage selection, dashboard KPIs, alerts and per-group
//! recommendations.

pub mod analytics;
pub mod clustering;
pub mod domain;
pub mod ingest;
pub mod recommend;

pub use domain::{
    ActivityEvent, ActivitySpec, EventKind, EventLog, FeatureMatrix, InclusionPolicy, IncomingEvent, IncomingKind,
};
