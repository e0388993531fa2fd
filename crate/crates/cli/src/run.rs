use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use tracing_subscriber::layer::SubscriberExt;
use tracing_subscriber::util::SubscriberInitExt;
use tracing_subscriber::Layer as _;
use tracing_subscriber::{fmt, EnvFilter};

use crate::config::RunConfig;

/// Output directory of one command invocation.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Use `explicit`, else a fresh `<run_root>/<command>-<unix time>-s<seed>`.
    pub fn create(explicit: Option<&Path>, config: &RunConfig, command: &str, seed: u64) -> anyhow::Result<Self> {
        let root = match explicit {
            Some(p) => p.to_path_buf(),
            None => {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                let stem = format!("{command}-{secs}-s{seed}");
                let mut candidate = config.run_root.join(&stem);
                let mut n = 1;
                while candidate.exists() {
                    candidate = config.run_root.join(format!("{stem}-{n}"));
                    n += 1;
                }
                candidate
            }
        };
        std::fs::create_dir_all(&root).with_context(|| format!("creating run directory {}", root.display()))?;
        let dir = RunDir { root };
        std::fs::write(dir.path("config.toml"), config.to_toml()?)?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoints(&self) -> anyhow::Result<PathBuf> {
        let dir = self.path("checkpoints");
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Log to stderr and to `run.log`. `RUST_LOG` sets the level, default info.
    pub fn init_logging(&self) -> anyhow::Result<()> {
        let file = File::create(self.path("run.log"))?;
        let filter = || EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"));
        tracing_subscriber::registry()
            .with(fmt::layer().with_writer(std::io::stderr).with_filter(filter()))
            .with(fmt::layer().with_ansi(false).with_writer(Mutex::new(file)).with_filter(filter()))
            .try_init()
            .ok();
        Ok(())
    }
}
