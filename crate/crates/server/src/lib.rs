//! HTTP server for the live classroom dashboard: ingests activity events,
//! recomputes analytics snapshots on a debounce schedule, and pushes version
//! changes to subscribers over server-sent events.

pub mod app;
pub mod config;
pub mod debounce;
pub mod http;
pub mod hub;
pub mod pipeline;
pub mod snapshot;

pub use config::{AnalyticsConfig, KPolicy, ReplayConfig, ServerConfig};
pub use pipeline::{Engine, IngestAck, Pipeline};
pub use snapshot::{AnalyticsSnapshot, ClusteringView};
