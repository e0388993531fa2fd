use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Service settings from a TOML file, then overridden by `ISEG_PORT`,
/// `ISEG_CHECKPOINT_DIR` and `ISEG_SESSION_TTL_SECS`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub checkpoint_dir: PathBuf,
    /// Idle sessions are dropped after this many seconds.
    pub session_ttl_secs: u64,
    /// Checkpoint used when a session does not name one.
    pub default_checkpoint: Option<String>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint_dir: PathBuf::from("checkpoints"),
            session_ttl_secs: 3600,
            default_checkpoint: None,
            max_upload_bytes: 64 << 20,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("environment variable {name}={value:?} is not valid")]
    Env { name: &'static str, value: String },
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// Load `path` if given, then apply environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        base.with_env(|k| std::env::var(k).ok())
    }

    pub fn with_env(mut self, get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        if let Some(v) = get("ISEG_PORT") {
            self.port = v.parse().map_err(|_| ConfigError::Env { name: "ISEG_PORT", value: v })?;
        }
        if let Some(v) = get("ISEG_CHECKPOINT_DIR") {
            self.checkpoint_dir = PathBuf::from(v);
        }
        if let Some(v) = get("ISEG_SESSION_TTL_SECS") {
            self.session_ttl_secs = v.parse().map_err(|_| ConfigError::Env { name: "ISEG_SESSION_TTL_SECS", value: v })?;
        }
        Ok(self)
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
