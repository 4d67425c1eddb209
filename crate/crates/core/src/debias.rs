//! Cross-gender logit regularizer.
//!
//! Within a batch, indices are shuffled and paired off (0-1, 2-3, ...). Pairs
//! whose documents carry different genders are kept and weighted by the alpha
//! for that gender pair. With `N` kept pairs the penalty is
//!
//! ```text
//! R = (1/N) * sum_k alpha_k * (z_k - z'_k)^2          (R = 0 when N = 0)
//! dR/da = (2/N) * sum_k alpha_k * (z_k - z'_k) * (x_k - x'_k)
//! ```
//!
//! and the batch objective is mean BCE plus `R`.

use serde::{Deserialize, Serialize};

use crate::adapter::{bce_with_logit, sigmoid, AdapterWeights};
use crate::corpus::{Example, Gender};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DebiasConfig {
    pub alpha_mf: f64,
    pub alpha_mn: f64,
    pub alpha_fn: f64,
    pub pair_seed: u64,
}

impl DebiasConfig {
    pub fn new(alpha_mf: f64, alpha_mn: f64, alpha_fn: f64, pair_seed: u64) -> Self {
        DebiasConfig {
            alpha_mf,
            alpha_mn,
            alpha_fn,
            pair_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("alpha_mf", self.alpha_mf),
            ("alpha_mn", self.alpha_mn),
            ("alpha_fn", self.alpha_fn),
        ] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {a}"
                )));
            }
        }
        Ok(())
    }

    /// Symmetric weight lookup; zero for same-gender pairs.
    pub fn alpha(&self, a: Gender, b: Gender) -> f64 {
        use Gender::*;
        match (a, b) {
            (M, F) | (F, M) => self.alpha_mf,
            (M, N) | (N, M) => self.alpha_mn,
            (F, N) | (N, F) => self.alpha_fn,
            _ => 0.0,
        }
    }

    pub fn alphas(&self) -> [f64; 3] {
        [self.alpha_mf, self.alpha_mn, self.alpha_fn]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenderPair {
    pub first: usize,
    pub second: usize,
    pub weight: f64,
}

/// Samples cross-gender pairs for one batch without replacement.
pub fn sample_pairs(
    genders: &[Gender],
    cfg: &DebiasConfig,
    epoch: usize,
    batch_index: usize,
) -> Vec<GenderPair> {
    let mut order: Vec<usize> = (0..genders.len()).collect();
    rng::shuffle(
        &mut order,
        &mut rng::batch_stream(cfg.pair_seed, epoch, batch_index),
    );
    order
        .chunks_exact(2)
        .filter(|p| genders[p[0]] != genders[p[1]])
        .map(|p| GenderPair {
            first: p[0],
            second: p[1],
            weight: cfg.alpha(genders[p[0]], genders[p[1]]),
        })
        .collect()
}

fn check_pairs(pairs: &[GenderPair], len: usize) -> Result<()> {
    for p in pairs {
        for index in [p.first, p.second] {
            if index >= len {
                return Err(Error::PairIndexOutOfRange { index, len });
            }
        }
    }
    Ok(())
}

pub fn regularizer(pairs: &[GenderPair], logits: &[f64]) -> Result<f64> {
    check_pairs(pairs, logits.len())?;
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let d = logits[p.first] - logits[p.second];
            p.weight * d * d
        })
        .sum();
    Ok(sum / pairs.len() as f64)
}

/// Gradient of [`regularizer`] with respect to the adapter weights.
pub fn regularizer_grad<X: AsRef<[f64]>>(
    pairs: &[GenderPair],
    logits: &[f64],
    rows: &[X],
    dim: usize,
) -> Result<Vec<f64>> {
    check_pairs(pairs, logits.len().min(rows.len()))?;
    let mut grad = vec![0.0; dim];
    accumulate_regularizer_grad(pairs, logits, rows, &mut grad)?;
    Ok(grad)
}

fn accumulate_regularizer_grad<X: AsRef<[f64]>>(
    pairs: &[GenderPair],
    logits: &[f64],
    rows: &[X],
    grad: &mut [f64],
) -> Result<()> {
    if pairs.is_empty() {
        return Ok(());
    }
    let n = pairs.len() as f64;
    for p in pairs {
        let (xk, xl) = (rows[p.first].as_ref(), rows[p.second].as_ref());
        for x in [xk, xl] {
            if x.len() != grad.len() {
                return Err(Error::DimensionMismatch {
                    expected: grad.len(),
                    actual: x.len(),
                });
            }
        }
        let c = 2.0 * p.weight * (logits[p.first] - logits[p.second]) / n;
        for ((g, a), b) in grad.iter_mut().zip(xk).zip(xl) {
            *g += c * (a - b);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    /// Mean BCE plus the regularizer.
    pub loss: f64,
    pub grad: Vec<f64>,
    pub bce: f64,
    pub regularizer: f64,
    pub pairs: usize,
}

/// Loss and gradient for one batch read from `store`.
pub fn batch_loss(
    batch: &[&Example],
    store: &EmbeddingStore,
    w: &AdapterWeights,
    cfg: Option<&DebiasConfig>,
    epoch: usize,
    batch_index: usize,
) -> Result<BatchLoss> {
    let rows = batch
        .iter()
        .map(|e| {
            store
                .get(&e.example_id)
                .map(|v| v.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>())
                .ok_or_else(|| Error::MissingEmbedding(e.example_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let genders: Vec<Gender> = batch.iter().map(|e| e.gender).collect();
    let targets: Vec<bool> = batch.iter().map(|e| e.relevant).collect();
    batch_loss_rows(&rows, &genders, &targets, w, cfg, epoch, batch_index)
}

pub(crate) fn batch_loss_rows(
    rows: &[&[f64]],
    genders: &[Gender],
    targets: &[bool],
    w: &AdapterWeights,
    cfg: Option<&DebiasConfig>,
    epoch: usize,
    batch_index: usize,
) -> Result<BatchLoss> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset("empty batch".into()));
    }
    let dim = w.dim();
    let b = rows.len() as f64;
    let mut logits = Vec::with_capacity(rows.len());
    let mut grad = vec![0.0; dim];
    let mut bce = 0.0;
    for (x, &t) in rows.iter().zip(targets) {
        let z = w.logit(x)?;
        bce += bce_with_logit(z, t);
        let r = (sigmoid(z) - f64::from(u8::from(t))) / b;
        for (g, xi) in grad.iter_mut().zip(x.iter()) {
            *g += r * xi;
        }
        logits.push(z);
    }
    bce /= b;

    let (mut reg, mut pairs) = (0.0, 0);
    if let Some(cfg) = cfg {
        // No pairs are drawn for all-zero alphas: the result equals the
        // unregularized batch bit for bit.
        if cfg.alphas().iter().any(|a| *a != 0.0) {
            let sampled = sample_pairs(genders, cfg, epoch, batch_index);
            reg = regularizer(&sampled, &logits)?;
            accumulate_regularizer_grad(&sampled, &logits, rows, &mut grad)?;
            pairs = sampled.len();
        }
    }
    Ok(BatchLoss {
        loss: bce + reg,
        grad,
        bce,
        regularizer: reg,
        pairs,
    })
}
