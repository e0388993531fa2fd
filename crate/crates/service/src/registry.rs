use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use iseg_core::network::{Model, ModelCheckpoint, NetworkSpec};
use serde::Serialize;

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointInfo {
    pub id: String,
    pub file: PathBuf,
    pub spec: NetworkSpec,
    pub param_count: usize,
    pub epochs: usize,
    pub config_hash: String,
    pub fingerprint: String,
}

/// `*.ckpt` files of one directory, addressed by file stem and loaded on
/// first use.
pub struct CheckpointRegistry {
    dir: PathBuf,
    loaded: RwLock<HashMap<String, (CheckpointInfo, Arc<Model>)>>,
}

impl CheckpointRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CheckpointRegistry { dir: dir.into(), loaded: RwLock::new(HashMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn ids(&self) -> Vec<String> {
        let Ok(entries) = std::fs::read_dir(&self.dir) else { return Vec::new() };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        ids.sort();
        ids
    }

    pub fn get(&self, id: &str) -> ApiResult<(CheckpointInfo, Arc<Model>)> {
        if let Some(hit) = self.loaded.read().expect("registry lock").get(id) {
            return Ok(hit.clone());
        }
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !id.starts_with('.');
        let file = self.dir.join(format!("{id}.ckpt"));
        if !valid || !file.is_file() {
            return Err(ApiError::UnknownCheckpoint(id.to_string()));
        }
        let ckpt = ModelCheckpoint::load(&file).map_err(|e| ApiError::Internal(format!("loading checkpoint {id}: {e}")))?;
        let info = CheckpointInfo {
            id: id.to_string(),
            file,
            spec: ckpt.model.spec().clone(),
            param_count: ckpt.model.param_count(),
            epochs: ckpt.meta.epochs,
            config_hash: ckpt.meta.config_hash.clone(),
            fingerprint: ckpt.hash(),
        };
        let entry = (info, Arc::new(ckpt.model));
        self.loaded.write().expect("registry lock").insert(id.to_string(), entry.clone());
        Ok(entry)
    }

    /// Every loadable checkpoint; unreadable files are skipped with a warning.
    pub fn list(&self) -> Vec<CheckpointInfo> {
        self.ids()
            .into_iter()
            .filter_map(|id| match self.get(&id) {
                Ok((info, _)) => Some(info),
                Err(e) => {
                    tracing::warn!(checkpoint = %id, error = %e, "skipping checkpoint");
                    None
                }
            })
            .collect()
    }

    /// `requested`, else the configured default, else the only checkpoint.
    pub fn resolve(&self, requested: Option<&str>, default: Option<&str>) -> ApiResult<String> {
        if let Some(id) = requested.or(default) {
            return Ok(id.to_string());
        }
        let ids = self.ids();
        match ids.as_slice() {
            [only] => Ok(only.clone()),
            [] => Err(ApiError::UnknownCheckpoint("no checkpoints available".into())),
            _ => Err(ApiError::BadRequest(format!("several checkpoints available, name one of {ids:?}"))),
        }
    }
}
