use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{generate_one, ingest_volume, IngestOptions, Slice, SyntheticShapeParams};
use crate::error::{Error, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A CT volume with its label volume and the organ label to segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSource {
    pub image: PathBuf,
    pub label: Option<PathBuf>,
    pub roi_label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceLocator {
    /// Index into the manifest's synthetic generator.
    Synthetic { index: usize },
    /// Axial slice `z` of `volumes[volume]`.
    Volume { volume: usize, z: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slice_id: String,
    pub volume_id: String,
    pub split: Split,
    pub locator: SliceLocator,
}

/// Everything needed to rebuild a dataset byte for byte. Stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    #[serde(default)]
    pub synthetic: Option<SyntheticShapeParams>,
    #[serde(default)]
    pub volumes: Vec<VolumeSource>,
    #[serde(default)]
    pub ingest: IngestOptions,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Synthetic manifest: the first `train` indices are training slices,
    /// then `val`, then `test`. Each synthetic slice is its own volume.
    pub fn synthetic(params: SyntheticShapeParams, train: usize, val: usize, test: usize) -> Result<Self> {
        params.validate()?;
        let splits = std::iter::repeat_n(Split::Train, train)
            .chain(std::iter::repeat_n(Split::Val, val))
            .chain(std::iter::repeat_n(Split::Test, test));
        let entries = splits
            .enumerate()
            .map(|(index, split)| {
                let id = format!("syn-{index:05}");
                ManifestEntry { slice_id: id.clone(), volume_id: id, split, locator: SliceLocator::Synthetic { index } }
            })
            .collect();
        Ok(DatasetManifest { seed: params.seed, synthetic: Some(params), volumes: Vec::new(), ingest: IngestOptions::default(), entries })
    }

    /// Volume manifest: volumes are shuffled with `seed` and assigned whole
    /// to splits, `test_volumes` and `val_volumes` first, the rest train.
    /// Every volume is read once to enumerate its slices.
    pub fn from_volumes(volumes: Vec<VolumeSource>, ingest: IngestOptions, seed: u64, val_volumes: usize, test_volumes: usize) -> Result<Self> {
        if val_volumes + test_volumes >= volumes.len() {
            return Err(Error::InvalidParams(format!(
                "{} volumes cannot hold {val_volumes} val + {test_volumes} test volumes and a train split",
                volumes.len()
            )));
        }
        let mut order: Vec<usize> = (0..volumes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut split_of = vec![Split::Train; volumes.len()];
        for (rank, &v) in order.iter().enumerate() {
            if rank < test_volumes {
                split_of[v] = Split::Test;
            } else if rank < test_volumes + val_volumes {
                split_of[v] = Split::Val;
            }
        }
        let mut entries = Vec::new();
        for (v, src) in volumes.iter().enumerate() {
            for (z, s) in ingest_volume(&src.image, src.label.as_deref(), src.roi_label, &IngestOptions { drop_empty: false, ..ingest.clone() })?
                .into_iter()
                .enumerate()
            {
                if ingest.drop_empty && s.gt_mask.is_some() && !s.has_foreground() {
                    continue;
                }
                entries.push(ManifestEntry {
                    slice_id: s.slice_id,
                    volume_id: s.volume_id,
                    split: split_of[v],
                    locator: SliceLocator::Volume { volume: v, z },
                });
            }
        }
        let manifest = DatasetManifest { seed, synthetic: None, volumes, ingest, entries };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Leakage guard: unique slice ids, whole volumes per split, and every
    /// locator resolvable.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut volume_split: HashMap<&str, Split> = HashMap::new();
        for e in &self.entries {
            if !ids.insert(e.slice_id.as_str()) {
                return Err(Error::InvalidSpec(format!("slice {} listed twice", e.slice_id)));
            }
            if let Some(prev) = volume_split.insert(e.volume_id.as_str(), e.split) {
                if prev != e.split {
                    return Err(Error::InvalidSpec(format!("volume {} spans {prev:?} and {:?}", e.volume_id, e.split)));
                }
            }
            match e.locator {
                SliceLocator::Synthetic { .. } if self.synthetic.is_none() => {
                    return Err(Error::InvalidSpec(format!("slice {} needs synthetic params", e.slice_id)));
                }
                SliceLocator::Volume { volume, .. } if volume >= self.volumes.len() => {
                    return Err(Error::InvalidSpec(format!("slice {} points at missing volume {volume}", e.slice_id)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Materialize one split in manifest order.
    pub fn load_split(&self, split: Split, exec: Execution) -> Result<Vec<Slice>> {
        self.validate()?;
        let wanted: Vec<&ManifestEntry> = self.entries.iter().filter(|e| e.split == split).collect();
        let mut by_volume: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for e in &wanted {
            if let SliceLocator::Volume { volume, z } = e.locator {
                by_volume.entry(volume).or_default().push(z);
            }
        }
        let volume_ids: Vec<usize> = by_volume.keys().copied().collect();
        let ingested = exec.map(&volume_ids, |&v| {
            let src = &self.volumes[v];
            let opts = IngestOptions { drop_empty: false, ..self.ingest.clone() };
            ingest_volume(&src.image, src.label.as_deref(), src.roi_label, &opts).map(|s| (v, s))
        });
        let mut volumes: HashMap<usize, Vec<Slice>> = HashMap::new();
        for r in ingested {
            let (v, s) = r?;
            volumes.insert(v, s);
        }
        let synthetic = self.synthetic.as_ref();
        exec.map(&wanted, |e| match e.locator {
            SliceLocator::Synthetic { index } => generate_one(synthetic.expect("validated"), index),
            SliceLocator::Volume { volume, z } => volumes[&volume]
                .get(z)
                .cloned()
                .ok_or_else(|| Error::InvalidSpec(format!("slice {} is beyond the volume depth", e.slice_id))),
        })
        .into_iter()
        .collect()
    }

    /// Digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileMissing(path.to_path_buf()),
            _ => e.into(),
        })?;
        let m: DatasetManifest = serde_json::from_slice(&text)?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_split_counts() {
        let m = DatasetManifest::synthetic(SyntheticShapeParams::default(), 6, 2, 3).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (6, 2, 3));
        m.validate().unwrap();
        let test = m.load_split(Split::Test, Execution::Sequential).unwrap();
        assert_eq!(test[0].slice_id, "syn-00008");
        assert_eq!(test, m.load_split(Split::Test, Execution::Parallel).unwrap());
    }

    #[test]
    fn leakage_is_rejected() {
        let mut m = DatasetManifest::synthetic(SyntheticShapeParams::default(), 2, 0, 1).unwrap();
        m.entries[2].volume_id = m.entries[0].volume_id.clone();
        assert!(matches!(m.validate(), Err(Error::InvalidSpec(_))));
        let mut dup = DatasetManifest::synthetic(SyntheticShapeParams::default(), 2, 0, 1).unwrap();
        dup.entries[1].slice_id = dup.entries[0].slice_id.clone();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn json_round_trip_keeps_hash() {
        let m = DatasetManifest::synthetic(SyntheticShapeParams::default(), 3, 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let back = DatasetManifest::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
    }
}
