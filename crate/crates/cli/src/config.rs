use std::path::{Path, PathBuf};

use anyhow::Context;
use iseg_core::data::{IngestOptions, SyntheticShapeParams, VolumeSource};
use iseg_core::harness::{EvalOptions, TrainConfig};
use iseg_service::ServiceConfig;
use serde::{Deserialize, Serialize};

/// Everything a command reads, from one TOML file. Missing sections take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Parent of generated run directories.
    pub run_root: PathBuf,
    /// Write a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub data: DataConfig,
    pub ingest: IngestConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub grid: GridConfig,
    pub service: ServiceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_root: PathBuf::from("runs"),
            checkpoint_every: 0,
            data: DataConfig::default(),
            ingest: IngestConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            grid: GridConfig::default(),
            service: ServiceConfig::default(),
        }
    }
}

/// Dataset used by `train`, `evaluate`, `grid` and `export-maps`: an
/// existing manifest, or a synthetic set built from `synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub synthetic: SyntheticShapeParams,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { manifest: None, synthetic: SyntheticShapeParams::default(), train: 400, val: 0, test: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub volumes: Vec<VolumeSource>,
    pub options: IngestOptions,
    pub val_volumes: usize,
    pub test_volumes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Experiment numbers to run; empty runs all nine.
    pub experiments: Vec<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(config.relative_to(path.parent().unwrap_or(Path::new("."))))
    }

    /// Resolve relative paths in the file against the file's directory.
    fn relative_to(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run_root);
        fix(&mut self.service.checkpoint_dir);
        if let Some(m) = self.data.manifest.as_mut() {
            fix(m);
        }
        for v in &mut self.ingest.volumes {
            fix(&mut v.image);
            if let Some(l) = v.label.as_mut() {
                fix(l);
            }
        }
        self
    }

    /// Apply `--seed` to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.eval.seed = seed;
        self.data.synthetic.seed = seed;
        self
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
