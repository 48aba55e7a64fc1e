//! Server configuration, loaded from JSON and overridable from the CLI.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use classroom_core::ingest::{Format, DEFAULT_GAP_MS};
use classroom_core::recommend::{AlertConfig, AlertRule};
use classroom_core::ActivitySpec;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad config {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Number of flat clusters: chosen by silhouette, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KPolicy {
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for KPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(KPolicy::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(KPolicy::Fixed(k)),
            _ => Err(format!("expected `auto` or an integer ≥ 1, got `{s}`")),
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::Auto => f.write_str("auto"),
            KPolicy::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for KPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KPolicy::Auto => s.serialize_str("auto"),
            KPolicy::Fixed(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KPolicy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Fixed(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Fixed(k) => KPolicy::from_str(&k.to_string()),
            Raw::Text(s) => KPolicy::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: Format,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_gap")]
    pub gap_ms: u64,
}

fn default_format() -> Format {
    Format::Assistments
}

fn default_speed() -> f64 {
    1.0
}

fn default_gap() -> u64 {
    DEFAULT_GAP_MS
}

impl ReplayConfig {
    pub fn new(path: impl Into<PathBuf>, format: Format) -> Self {
        ReplayConfig {
            path: path.into(),
            format,
            speed: default_speed(),
            gap_ms: default_gap(),
        }
    }
}

/// Settings that shape a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticsConfig {
    pub k: KPolicy,
    pub alerts: AlertConfig,
    pub histogram_bin_width: u32,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            k: KPolicy::Auto,
            alerts: AlertConfig::default(),
            histogram_bin_width: 10,
        }
    }
}

impl AnalyticsConfig {
    pub fn rules(&self) -> Result<Vec<AlertRule>, ConfigError> {
        self.alerts.rules().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub port: u16,
    pub replay: Option<ReplayConfig>,
    pub debounce_ms: u64,
    pub k: KPolicy,
    pub alerts: AlertConfig,
    pub histogram_bin_width: u32,
    /// Activity definition for live ingestion without a replay file.
    pub activity: Option<ActivitySpec>,
    /// Version notifications buffered per stream subscriber before it is
    /// told to resync.
    pub stream_buffer: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            port: 8080,
            replay: None,
            debounce_ms: 2000,
            k: KPolicy::Auto,
            alerts: AlertConfig::default(),
            histogram_bin_width: 10,
            activity: None,
            stream_buffer: 64,
        }
    }
}

impl ServerConfig {
    pub fn analytics(&self) -> AnalyticsConfig {
        AnalyticsConfig {
            k: self.k,
            alerts: self.alerts.clone(),
            histogram_bin_width: self.histogram_bin_width,
        }
    }

    /// Reads a JSON config. A relative replay path is taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: ServerConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Json {
            path: path.to_owned(),
            source,
        })?;
        if let (Some(replay), Some(dir)) = (cfg.replay.as_mut(), path.parent()) {
            if replay.path.is_relative() {
                replay.path = dir.join(&replay.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let KPolicy::Fixed(0) = self.k {
            return Err(ConfigError::Invalid("fixed k must be at least 1".into()));
        }
        let w = self.histogram_bin_width;
        if w == 0 || 100 % w != 0 {
            return Err(ConfigError::Invalid(format!(
                "histogram_bin_width {w} does not divide 100"
            )));
        }
        if let Some(r) = &self.replay {
            if !(r.speed > 0.0 && r.speed.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "replay speed must be positive, got {}",
                    r.speed
                )));
            }
        }
        if self.stream_buffer == 0 {
            return Err(ConfigError::Invalid("stream_buffer must be positive".into()));
        }
        self.analytics().rules()?;
        Ok(())
    }
}
