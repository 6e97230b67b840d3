//! Versioned checkpoint archive shared by all trained models.
//!
//! Layout: magic `UGCK`, format version, a JSON header (kind, skeleton ids,
//! config hash, model metadata, parameter index), then raw little-endian f64
//! parameter blobs in index order.

use crate::error::{Error, Result};
use crate::nn::{ParamStore, TensorD};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::IxDyn;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"UGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
    skeleton_ids: Vec<String>,
    config_hash: String,
    meta: serde_json::Value,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

/// A trained model's persisted state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: String,
    pub skeleton_ids: Vec<String>,
    pub config_hash: String,
    /// model-specific metadata (architecture config, pooling maps, ...)
    pub meta: serde_json::Value,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(kind: &str, config_hash: &str, meta: serde_json::Value, params: ParamStore) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            skeleton_ids: Vec::new(),
            config_hash: config_hash.to_string(),
            meta,
            params,
        }
    }

    pub fn with_skeletons(mut self, ids: Vec<String>) -> Self {
        self.skeleton_ids = ids;
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let entries: Vec<ParamEntry> = self
            .params
            .iter()
            .map(|(name, v)| ParamEntry {
                name: name.clone(),
                shape: v.shape().to_vec(),
            })
            .collect();
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            skeleton_ids: self.skeleton_ids.clone(),
            config_hash: self.config_hash.clone(),
            meta: self.meta.clone(),
            params: entries,
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        f.write_u64::<LittleEndian>(header_bytes.len() as u64)?;
        f.write_all(&header_bytes)?;
        for (_, v) in self.params.iter() {
            for &x in v.iter() {
                f.write_f64::<LittleEndian>(x)?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = f.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        let header_len = f.read_u64::<LittleEndian>()? as usize;
        let mut header_bytes = vec![0u8; header_len];
        f.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Checkpoint(format!("header decode: {e}")))?;
        let mut params = ParamStore::new();
        for entry in &header.params {
            let n: usize = entry.shape.iter().product();
            let mut data = vec![0f64; n];
            f.read_f64_into::<LittleEndian>(&mut data)?;
            let t = TensorD::from_shape_vec(IxDyn(&entry.shape), data)
                .map_err(|e| Error::Checkpoint(format!("blob shape: {e}")))?;
            params.insert(&entry.name, t);
        }
        Ok(Checkpoint {
            kind: header.kind,
            skeleton_ids: header.skeleton_ids,
            config_hash: header.config_hash,
            meta: header.meta,
            params,
        })
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Hex SHA-256 of an in-memory byte slice.
pub fn bytes_hash(bytes: &[u8]) -> String {
    use sha2::Digest;
    format!("{:x}", sha2::Sha256::digest(bytes))
}
