//! Wiring for the `serve` command.

use std::fs::File;

use anyhow::{bail, Context};
use classroom_core::ingest::{parse_events, ColumnMapping, ReplayPlan};
use tokio::net::TcpListener;

use crate::config::ServerConfig;
use crate::http::router;
use crate::pipeline::Engine;

/// Builds the engine, starts the replay if one is configured, and serves
/// until `shutdown` resolves.
pub async fn serve(
    config: ServerConfig,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    config.validate()?;
    let (spec, plan) = match &config.replay {
        Some(r) => {
            let file = File::open(&r.path).with_context(|| format!("opening {}", r.path.display()))?;
            let parsed = parse_events(file, &ColumnMapping::for_format(r.format))?;
            for e in &parsed.row_errors {
                tracing::warn!(%e, "skipped row");
            }
            tracing::info!(
                events = parsed.events.len(),
                students = parsed.spec.roster().len(),
                path = %r.path.display(),
                "loaded replay file"
            );
            let plan = ReplayPlan::new(parsed.events, r.gap_ms, r.speed)?;
            (parsed.spec, Some(plan))
        }
        None => match &config.activity {
            Some(spec) => (spec.clone(), None),
            None => bail!("config needs either `replay` or `activity` to define the roster"),
        },
    };

    let (engine, worker) = Engine::start(spec, config.analytics(), config.debounce_ms, config.stream_buffer)?;
    if let Some(plan) = plan {
        let replay = engine.spawn_replay(plan);
        tokio::spawn(async move {
            match replay.await {
                Ok(Ok(report)) => tracing::info!(
                    delivered = report.delivered,
                    actual_ms = report.actual_duration_ms,
                    max_drift_ms = report.max_drift_ms,
                    "replay finished"
                ),
                Ok(Err(e)) => tracing::error!(error = %e, "replay aborted"),
                Err(e) => tracing::error!(error = %e, "replay task failed"),
            }
        });
    }

    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(shutdown)
        .await?;
    worker.abort();
    Ok(())
}
