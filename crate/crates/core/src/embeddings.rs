//! Frozen example embeddings: the binary interchange format and a built-in
//! signed feature-hashing encoder.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! b"EMB1" | u32 version = 1 | u32 dim | u64 count
//! count x ( u16 key_len | key bytes (UTF-8) | dim x f32 )
//! ```
//!
//! Records are written with keys in lexicographic byte order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Example};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Example id to fixed-length vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "embedding dim {dim} out of range"
            )));
        }
        Ok(EmbeddingStore {
            dim,
            vectors: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, example_id: &str) -> Option<&[f32]> {
        self.vectors.get(example_id).map(Vec::as_slice)
    }

    /// Entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Inserts a vector, rejecting wrong lengths, non-finite values, keys that
    /// do not fit the format and duplicates.
    pub fn insert(&mut self, example_id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = example_id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for `{key}`")));
        }
        if key.len() > u16::MAX as usize {
            return Err(Error::EmbeddingFormat(format!(
                "key of {} bytes exceeds the u16 length prefix",
                key.len()
            )));
        }
        if self.vectors.contains_key(&key) {
            return Err(Error::EmbeddingFormat(format!(
                "duplicate example_id `{key}`"
            )));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    /// Vectors for every example of `d`, in dataset order, widened to f64.
    pub fn rows_for(&self, d: &Dataset) -> Result<Vec<Vec<f64>>> {
        d.iter()
            .map(|e| {
                self.get(&e.example_id)
                    .map(|v| v.iter().map(|&x| f64::from(x)).collect())
                    .ok_or_else(|| Error::MissingEmbedding(e.example_id.clone()))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let record = |k: &String| 2 + k.len() + 4 * self.dim;
        let mut out = Vec::with_capacity(20 + self.vectors.keys().map(record).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.vectors.len() as u64).to_le_bytes());
        for (key, vector) in &self.vectors {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            for v in vector {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let header = |what: &str| Error::EmbeddingFormat(format!("truncated header ({what})"));
        if r.take(4).ok_or_else(|| header("magic"))? != MAGIC {
            return Err(Error::EmbeddingFormat("bad magic".into()));
        }
        let version = r.u32().ok_or_else(|| header("version"))?;
        if version != FORMAT_VERSION {
            return Err(Error::EmbeddingFormat(format!(
                "unsupported version {version}"
            )));
        }
        let dim = r.u32().ok_or_else(|| header("dim"))? as usize;
        let count = r.u64().ok_or_else(|| header("count"))?;
        let mut store = EmbeddingStore::new(dim)?;
        for index in 0..count {
            let truncated = || Error::Truncated { index };
            let key_len = r.u16().ok_or_else(truncated)? as usize;
            let key = std::str::from_utf8(r.take(key_len).ok_or_else(truncated)?)
                .map_err(|_| Error::EmbeddingFormat(format!("record {index}: key is not UTF-8")))?
                .to_string();
            let raw = r.take(4 * dim).ok_or_else(truncated)?;
            let vector = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(key, vector)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::EmbeddingFormat(format!(
                "dimension mismatch: {} bytes remain after {count} records of dim {dim}",
                bytes.len() - r.pos
            )));
        }
        Ok(store)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

pub fn write_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEncoderConfig {
    pub dim: usize,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for HashEncoderConfig {
    fn default() -> Self {
        HashEncoderConfig {
            dim: 768,
            seed: 0,
            normalize: true,
        }
    }
}

impl HashEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.dim > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "hash encoder dim must be >= 2, got {}",
                self.dim
            )));
        }
        Ok(())
    }
}

/// FNV-1a over the token bytes with the seed XOR-ed into the offset basis.
pub fn seeded_fnv1a(token: &str, seed: u64) -> u64 {
    token.bytes().fold(FNV_OFFSET_BASIS ^ seed, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing of the example's query, title and content.
pub fn hash_encode(e: &Example, cfg: &HashEncoderConfig) -> Vec<f32> {
    let mut acc = vec![0.0f64; cfg.dim];
    for text in [&e.query_text, &e.doc_title, &e.doc_content] {
        for token in tokenize(text) {
            let h = seeded_fnv1a(&token, cfg.seed);
            let bucket = (h % cfg.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
    }
    if cfg.normalize {
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

pub fn encode_dataset(d: &Dataset, cfg: &HashEncoderConfig) -> Result<EmbeddingStore> {
    cfg.validate()?;
    let encoded: Vec<(String, Vec<f32>)> = d
        .examples()
        .par_iter()
        .map(|e| (e.example_id.clone(), hash_encode(e, cfg)))
        .collect();
    let mut store = EmbeddingStore::new(cfg.dim)?;
    for (id, v) in encoded {
        store.insert(id, v)?;
    }
    Ok(store)
}
