//! Single-file checkpoint container.
//!
//! ```text
//! "ISEGCKPT"                      8-byte magic
//! u64 little-endian               length of the JSON header in bytes
//! JSON header                     {"version", "spec", "meta", "tensors": [{"name", "len"}]}
//! f32 little-endian data          every tensor in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, NetworkSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ISEGCKPT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    spec: NetworkSpec,
    meta: TrainingMeta,
    tensors: Vec<TensorEntry>,
}

impl ModelCheckpoint {
    pub fn new(model: Model, meta: TrainingMeta) -> Self {
        ModelCheckpoint { model, meta }
    }

    /// Parameter fingerprint; identical training runs give identical hashes.
    pub fn hash(&self) -> String {
        self.model.fingerprint()
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            spec: self.model.spec().clone(),
            meta: self.meta.clone(),
            tensors: self.model.param_layout().into_iter().map(|(name, len)| TensorEntry { name, len }).collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in self.model.params() {
            let mut buf = Vec::with_capacity(p.len() * 4);
            for v in p {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", header.version)));
        }
        let mut params = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let mut bytes = vec![0u8; t.len * 4];
            r.read_exact(&mut bytes)?;
            params.push(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect());
        }
        let model = Model::from_parts(header.spec, params)?;
        let names: Vec<String> = model.param_layout().into_iter().map(|(n, _)| n).collect();
        if names.iter().zip(&header.tensors).any(|(a, b)| *a != b.name) {
            return Err(Error::Format("tensor names do not match the network spec".into()));
        }
        Ok(ModelCheckpoint { model, meta: header.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileMissing(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::read_from(BufReader::new(f))
    }
}
