//! Argument groups shared by several subcommands, and their resolution into
//! core configuration types.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use fairadapt_core::{
    encode_dataset, load_dataset, read_embeddings, BiasCorrectness, Dataset, DebiasConfig,
    EmbeddingStore, HashEncoderConfig, TrainConfig,
};
use serde::Serialize;

pub const DEFAULT_HASH_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Correctness {
    Any,
    Argmax,
    All,
}

impl From<Correctness> for BiasCorrectness {
    fn from(c: Correctness) -> Self {
        match c {
            Correctness::Any => BiasCorrectness::Any,
            Correctness::Argmax => BiasCorrectness::Argmax,
            Correctness::All => BiasCorrectness::All,
        }
    }
}

/// Where per-example vectors come from: a precomputed file, or the hashing
/// encoder. Exactly one source is used.
#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbeddingArgs {
    /// Binary embedding file.
    #[arg(long, conflicts_with_all = ["hash_dim", "hash_seed", "no_normalize"])]
    pub embeddings: Option<PathBuf>,
    /// Hashing-encoder dimension [default: 768].
    #[arg(long)]
    pub hash_dim: Option<usize>,
    /// Hashing-encoder seed [default: --seed].
    #[arg(long)]
    pub hash_seed: Option<u64>,
    /// Skip unit-norm scaling of hashed vectors.
    #[arg(long)]
    pub no_normalize: bool,
}

impl EmbeddingArgs {
    pub fn resolve(&mut self, seed: u64) {
        if self.embeddings.is_none() {
            self.hash_dim.get_or_insert(DEFAULT_HASH_DIM);
            self.hash_seed.get_or_insert(seed);
        }
    }

    pub fn hash_config(&self) -> HashEncoderConfig {
        HashEncoderConfig {
            dim: self.hash_dim.unwrap_or(DEFAULT_HASH_DIM),
            seed: self.hash_seed.unwrap_or(0),
            normalize: !self.no_normalize,
        }
    }

    pub fn load(&self, d: &Dataset) -> Result<EmbeddingStore> {
        match &self.embeddings {
            Some(path) => Ok(read_embeddings(path)?),
            None => Ok(encode_dataset(d, &self.hash_config())?),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Keep dataset order instead of shuffling each epoch.
    #[arg(long)]
    pub no_shuffle: bool,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            shuffle: !self.no_shuffle,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DebiasArgs {
    #[arg(long, default_value_t = 0.0)]
    pub alpha_mf: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha_mn: f64,
    #[arg(long, default_value_t = 0.0)]
    pub alpha_fn: f64,
    /// Pair-sampling seed [default: --seed].
    #[arg(long)]
    pub pair_seed: Option<u64>,
}

impl DebiasArgs {
    pub fn resolve(&mut self, seed: u64) {
        self.pair_seed.get_or_insert(seed);
    }

    /// `None` when every alpha is zero.
    pub fn config(&self) -> Option<DebiasConfig> {
        let cfg = DebiasConfig::new(
            self.alpha_mf,
            self.alpha_mn,
            self.alpha_fn,
            self.pair_seed.unwrap_or(0),
        );
        cfg.alphas().iter().any(|a| *a != 0.0).then_some(cfg)
    }
}

pub fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}
