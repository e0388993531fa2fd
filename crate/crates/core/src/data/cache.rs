//! Boundary weight maps keyed by `(slice_id, WeightConfig::cache_key())`.
//!
//! On disk: `<root>/v1/<config key>/<slice id>.wmap`, one `ISEGWMAP` file
//! per slice. Writes go to a temporary file that is renamed into place, so
//! concurrent writers of the same key never expose a partial file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::raster::Mask;
use crate::weighting::{gaussian_boundary_map, WeightConfig, WeightMap};

const LAYOUT_VERSION: &str = "v1";

type Key = (String, String);

#[derive(Debug, Default)]
pub struct WeightCache {
    root: Option<PathBuf>,
    memory: RwLock<HashMap<Key, Arc<WeightMap>>>,
    tmp_counter: AtomicU64,
}

impl WeightCache {
    pub fn in_memory() -> Self {
        WeightCache::default()
    }

    pub fn on_disk(root: impl Into<PathBuf>) -> Self {
        WeightCache { root: Some(root.into()), ..Default::default() }
    }

    fn path(&self, slice_id: &str, config_key: &str) -> Option<PathBuf> {
        let name: String = slice_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
        self.root.as_ref().map(|r| r.join(LAYOUT_VERSION).join(config_key).join(format!("{name}.wmap")))
    }

    pub fn store(&self, slice_id: &str, config: &WeightConfig, map: WeightMap) -> Result<Arc<WeightMap>> {
        let key = config.cache_key();
        if let Some(path) = self.path(slice_id, &key) {
            write_atomic(&path, &map, self.tmp_counter.fetch_add(1, Ordering::Relaxed))?;
        }
        let map = Arc::new(map);
        self.memory.write().expect("cache lock").insert((slice_id.to_string(), key), map.clone());
        Ok(map)
    }

    pub fn load(&self, slice_id: &str, config: &WeightConfig) -> Result<Arc<WeightMap>> {
        let key = (slice_id.to_string(), config.cache_key());
        if let Some(map) = self.memory.read().expect("cache lock").get(&key) {
            return Ok(map.clone());
        }
        let miss = || Error::CacheMiss(format!("{slice_id} [{}]", key.1));
        let path = self.path(slice_id, &key.1).ok_or_else(miss)?;
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(miss()),
            Err(e) => return Err(e.into()),
        };
        let map = Arc::new(WeightMap::read_from(BufReader::new(file))?);
        self.memory.write().expect("cache lock").insert(key, map.clone());
        Ok(map)
    }

    /// Cached boundary map for a slice, computing and storing it on a miss.
    pub fn boundary_map(&self, slice_id: &str, gt: &Mask, config: &WeightConfig) -> Result<Arc<WeightMap>> {
        match self.load(slice_id, config) {
            Ok(map) if map.dims() == crate::raster::dims(gt) => Ok(map),
            Ok(_) | Err(Error::CacheMiss(_)) => self.store(slice_id, config, gaussian_boundary_map(gt, config)?),
            Err(e) => Err(e),
        }
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn write_atomic(path: &Path, map: &WeightMap, nonce: u64) -> Result<()> {
    let dir = path.parent().expect("cache paths have a parent");
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{}.{}.{nonce}.tmp", path.file_name().unwrap().to_string_lossy(), std::process::id()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        map.write_to(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn square() -> Mask {
        Array2::from_shape_fn((16, 16), |(r, c)| (4..12).contains(&r) && (4..12).contains(&c))
    }

    #[test]
    fn round_trip_and_keying() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = WeightConfig::default();
        let map = gaussian_boundary_map(&square(), &cfg).unwrap();
        let cache = WeightCache::on_disk(dir.path());
        assert!(matches!(cache.load("a:0001", &cfg), Err(Error::CacheMiss(_))));
        cache.store("a:0001", &cfg, map.clone()).unwrap();

        let cold = WeightCache::on_disk(dir.path());
        assert_eq!(*cold.load("a:0001", &cfg).unwrap(), map);
        let other = WeightConfig { sigma_px: 3.0, ..cfg };
        assert!(matches!(cold.load("a:0001", &other), Err(Error::CacheMiss(_))));
    }

    #[test]
    fn memory_only_miss() {
        let cache = WeightCache::in_memory();
        assert!(matches!(cache.load("x", &WeightConfig::default()), Err(Error::CacheMiss(_))));
        let m = cache.boundary_map("x", &square(), &WeightConfig::default()).unwrap();
        assert_eq!(m.peak(), 10.0);
        assert_eq!(cache.len(), 1);
    }
}
