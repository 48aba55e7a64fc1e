use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use classroom_core::ingest::Format;
use classroom_server::{KPolicy, ReplayConfig, ServerConfig};
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "classroom", version, about = "Live classroom analytics server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the dashboard API, optionally replaying an activity file.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    /// JSON server configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Activity file to stream into the server.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    #[arg(long)]
    speed: Option<f64>,
    /// `auto` or a fixed number of clusters.
    #[arg(long)]
    k: Option<KPolicy>,
    #[arg(long)]
    debounce_ms: Option<u64>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
        .map_err(|e: classroom_core::ingest::IngestError| e.to_string())
}

impl ServeArgs {
    fn into_config(self) -> anyhow::Result<ServerConfig> {
        let mut cfg = match &self.config {
            Some(path) => ServerConfig::load(path)?,
            None => ServerConfig::default(),
        };
        if let Some(port) = self.port {
            cfg.port = port;
        }
        if let Some(path) = self.replay {
            let format = self
                .format
                .or(cfg.replay.as_ref().map(|r| r.format))
                .unwrap_or(Format::Assistments);
            let mut r = cfg.replay.take().unwrap_or_else(|| ReplayConfig::new(&path, format));
            r.path = path;
            r.format = format;
            cfg.replay = Some(r);
        } else if let (Some(format), Some(r)) = (self.format, cfg.replay.as_mut()) {
            r.format = format;
        }
        if let Some(speed) = self.speed {
            match cfg.replay.as_mut() {
                Some(r) => r.speed = speed,
                None => anyhow::bail!("--speed needs a replay file"),
            }
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(ms) = self.debounce_ms {
            cfg.debounce_ms = ms;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let Cli {
        command: Command::Serve(args),
    } = Cli::parse();
    let cfg = args.into_config()?;
    let listener = TcpListener::bind(("0.0.0.0", cfg.port))
        .await
        .with_context(|| format!("binding port {}", cfg.port))?;
    classroom_server::app::serve(cfg, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
