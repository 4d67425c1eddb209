//! Linear relevance adapter over frozen embeddings.
//!
//! The adapter is a single weight vector `a`; an example with embedding `x`
//! gets logit `z = a·x` and relevance probability `sigmoid(z)`. There is no
//! bias term. Training minimises mean binary cross-entropy per batch, plus the
//! cross-gender regularizer from [`crate::debias`] when configured, with AdamW
//! and analytic gradients. Embeddings are only ever borrowed immutably.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Gender};
use crate::debias::{self, DebiasConfig};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::rng;

/// Probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterWeights {
    pub a: Vec<f64>,
}

impl AdapterWeights {
    pub fn zeros(dim: usize) -> Self {
        AdapterWeights { a: vec![0.0; dim] }
    }

    /// Entries uniform in `[-1/sqrt(D), 1/sqrt(D))`.
    pub fn init(dim: usize, rng: &mut rng::Generator) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        AdapterWeights {
            a: (0..dim)
                .map(|_| rng::uniform_symmetric(rng, bound))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.a.len(), x.len())?;
        Ok(dot(&self.a, x))
    }

    /// `dim=<D>` then one value per line in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut s = format!("dim={}\n", self.a.len());
        for v in &self.a {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::WeightsFormat("empty file".into()))?;
        let dim: usize = header
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| Error::WeightsFormat(format!("bad header `{header}`")))?;
        let a = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::WeightsFormat(format!("line {}: {e}", i + 2)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if a.len() != dim {
            return Err(Error::WeightsFormat(format!(
                "header says dim={dim} but {} values follow",
                a.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adapter weight".into()));
        }
        Ok(AdapterWeights { a })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample<'a> {
    pub example_id: &'a str,
    pub logit: f64,
    pub score: f64,
    pub target: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Returns `(z, y)` with `y` clamped into the open unit interval.
pub fn score(w: &AdapterWeights, x: &[f64]) -> Result<(f64, f64)> {
    let z = w.logit(x)?;
    Ok((z, sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS)))
}

/// Binary cross-entropy of a probability against a 0/1 target.
pub fn bce_loss(y: f64, target: bool) -> f64 {
    let y = y.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if target {
        -y.ln()
    } else {
        -(1.0 - y).ln()
    }
}

/// Binary cross-entropy evaluated from the logit: `ln(1 + e^-|z|) + max(0, -z)`
/// for a positive target, `ln(1 + e^-|z|) + max(0, z)` for a negative one.
pub fn bce_with_logit(z: f64, target: bool) -> f64 {
    let soft = (-z.abs()).exp().ln_1p();
    if target {
        soft + (-z).max(0.0)
    } else {
        soft + z.max(0.0)
    }
}

/// `(sigmoid(z) - t) * x`, the gradient of the per-example loss w.r.t. `a`.
pub fn bce_grad(z: f64, target: bool, x: &[f64]) -> Vec<f64> {
    let r = sigmoid(z) - f64::from(u8::from(target));
    x.iter().map(|v| r * v).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    /// Zero moments with beta1 0.9, beta2 0.999, eps 1e-8, weight decay 0.01.
    pub fn new(dim: usize, lr: f64) -> Self {
        OptimizerState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `a -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * a)`.
pub fn adamw_step(w: &mut AdapterWeights, g: &[f64], s: &mut OptimizerState) -> Result<()> {
    check_dim(w.a.len(), g.len())?;
    check_dim(w.a.len(), s.m.len())?;
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    s.step += 1;
    let t = s.step as i32;
    let c1 = 1.0 - s.beta1.powi(t);
    let c2 = 1.0 - s.beta2.powi(t);
    for (((a, m), v), &gi) in w.a.iter_mut().zip(&mut s.m).zip(&mut s.v).zip(g) {
        *m = s.beta1 * *m + (1.0 - s.beta1) * gi;
        *v = s.beta2 * *v + (1.0 - s.beta2) * gi * gi;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *a -= s.lr * (m_hat / (v_hat.sqrt() + s.eps) + s.weight_decay * *a);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            epochs: 8,
            batch_size: 8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: AdapterWeights,
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

/// Trains an adapter on every example of `d`.
pub fn train_adapter(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    debias: Option<&DebiasConfig>,
) -> Result<AdapterWeights> {
    train_adapter_with_history(d, store, cfg, debias).map(|r| r.weights)
}

/// The generator seeded by `cfg.seed` first draws the initial weights, then
/// one Fisher–Yates permutation per epoch (when shuffling). Batches are
/// consecutive runs of `batch_size` permuted indices; the last may be short.
pub fn train_adapter_with_history(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    debias: Option<&DebiasConfig>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if let Some(db) = debias {
        db.validate()?;
    }
    if d.is_empty() {
        return Err(Error::EmptyDataset("nothing to train on".into()));
    }
    let rows = store.rows_for(d)?;
    let genders: Vec<Gender> = d.iter().map(|e| e.gender).collect();
    let targets: Vec<bool> = d.iter().map(|e| e.relevant).collect();

    let mut rng = rng::seeded(cfg.seed);
    let mut weights = AdapterWeights::init(store.dim(), &mut rng);
    let mut state = OptimizerState::new(store.dim(), cfg.lr);
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);

    let mut batch_rows: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut batch_genders = Vec::with_capacity(cfg.batch_size);
    let mut batch_targets = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng::shuffle(&mut order, &mut rng);
        }
        let mut total = 0.0;
        let mut batches = 0usize;
        for (batch_index, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_rows.clear();
            batch_genders.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_rows.push(&rows[i]);
                batch_genders.push(genders[i]);
                batch_targets.push(targets[i]);
            }
            let out = debias::batch_loss_rows(
                &batch_rows,
                &batch_genders,
                &batch_targets,
                &weights,
                debias,
                epoch,
                batch_index,
            )?;
            if !out.loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss at epoch {epoch}, batch {batch_index}"
                )));
            }
            adamw_step(&mut weights, &out.grad, &mut state)?;
            total += out.loss;
            batches += 1;
        }
        epoch_loss.push(total / batches as f64);
    }
    Ok(TrainReport {
        weights,
        epoch_loss,
        steps: state.step,
    })
}

/// Logits for every example of `d`, in dataset order.
pub fn logits(d: &Dataset, store: &EmbeddingStore, w: &AdapterWeights) -> Result<Vec<f64>> {
    check_dim(w.dim(), store.dim())?;
    d.iter()
        .map(|e| {
            let x = store
                .get(&e.example_id)
                .ok_or_else(|| Error::MissingEmbedding(e.example_id.clone()))?;
            Ok(w.a.iter().zip(x).map(|(a, &x)| a * f64::from(x)).sum())
        })
        .collect()
}

pub fn score_dataset<'a>(
    d: &'a Dataset,
    store: &EmbeddingStore,
    w: &AdapterWeights,
) -> Result<Vec<ScoredExample<'a>>> {
    let z = logits(d, store, w)?;
    Ok(d.iter()
        .zip(z)
        .map(|(e, z)| ScoredExample {
            example_id: &e.example_id,
            logit: z,
            score: sigmoid(z).clamp(PROB_EPS, 1.0 - PROB_EPS),
            target: e.relevant,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_score_half() {
        let w = AdapterWeights::zeros(4);
        assert_eq!(score(&w, &[1.0, -2.0, 3.0, 0.5]).unwrap(), (0.0, 0.5));
        let w = AdapterWeights {
            a: vec![0.3, -1.0, 2.0, 9.0],
        };
        assert_eq!(score(&w, &[0.0; 4]).unwrap(), (0.0, 0.5));
    }

    #[test]
    fn score_of_two() {
        let w = AdapterWeights {
            a: vec![1.0, 0.0, 0.0],
        };
        let (z, y) = score(&w, &[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, 2.0);
        // 1 / (1 + e^-2)
        assert!((y - 0.880_797_077_977_882_3).abs() < 1e-12);
    }

    #[test]
    fn score_dimension_mismatch() {
        let w = AdapterWeights::zeros(3);
        assert!(matches!(
            score(&w, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(bce_grad(0.0, true, &[1.0]).len() == 1);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-15, true) < 1e-11);
        for y in [0.01, 0.2, 0.5, 0.77, 0.999] {
            assert!((bce_loss(y, true) - bce_loss(1.0 - y, false)).abs() < 1e-12);
        }
    }

    #[test]
    fn logit_form_matches_probability_form() {
        // The probability form loses precision in 1 - y once sigmoid(z) nears 1.
        for z in [-12.0, -3.0, -0.1, 0.0, 0.4, 5.0, 12.0] {
            for t in [true, false] {
                let p = bce_loss(sigmoid(z), t);
                let l = bce_with_logit(z, t);
                assert!((p - l).abs() < 1e-9 * (1.0 + l), "z={z} t={t}: {p} vs {l}");
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        for z in [-500.0, -100.0, 100.0, 500.0] {
            let y = sigmoid(z);
            assert!(y.is_finite());
            for t in [true, false] {
                assert!(bce_with_logit(z, t).is_finite());
                assert!(bce_loss(y, t).is_finite());
            }
            let w = AdapterWeights { a: vec![1.0] };
            let (_, y) = score(&w, &[z]).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    #[test]
    fn bce_grad_hand_values() {
        assert_eq!(bce_grad(0.0, true, &[1.0, 0.0]), [-0.5, 0.0]);
        assert_eq!(bce_grad(0.0, false, &[1.0, 0.0]), [0.5, 0.0]);
    }

    #[test]
    fn adamw_zero_gradient_fixed_point() {
        let mut w = AdapterWeights {
            a: vec![0.5, -0.25],
        };
        let mut s = OptimizerState::new(2, 0.1);
        s.weight_decay = 0.0;
        adamw_step(&mut w, &[0.0, 0.0], &mut s).unwrap();
        assert_eq!(w.a, [0.5, -0.25]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn adamw_first_step() {
        let mut w = AdapterWeights::zeros(1);
        let mut s = OptimizerState::new(1, 0.1);
        adamw_step(&mut w, &[1.0], &mut s).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((w.a[0] + 0.1).abs() < 1e-8);
        assert!((w.a[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adamw_rejects_non_finite() {
        let mut w = AdapterWeights::zeros(2);
        let mut s = OptimizerState::new(2, 0.1);
        assert!(matches!(
            adamw_step(&mut w, &[1.0, f64::NAN], &mut s),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(s.step, 0);
    }

    #[test]
    fn adamw_deterministic() {
        let run = || {
            let mut w = AdapterWeights {
                a: vec![0.1, 0.2, 0.3],
            };
            let mut s = OptimizerState::new(3, 0.01);
            for _ in 0..5 {
                adamw_step(&mut w, &[0.3, -1.0, 2.5], &mut s).unwrap();
            }
            (w, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn weights_text_round_trip() {
        let w = AdapterWeights {
            a: vec![0.1, -1e-300, 123456.789, f64::MIN_POSITIVE, 1.0 / 3.0],
        };
        let text = w.to_text();
        assert!(text.starts_with("dim=5\n"));
        assert_eq!(AdapterWeights::from_text(&text).unwrap(), w);
    }

    #[test]
    fn weights_text_errors() {
        assert!(AdapterWeights::from_text("").is_err());
        assert!(AdapterWeights::from_text("dim=2\n1.0\n").is_err());
        assert!(AdapterWeights::from_text("size=1\n1.0\n").is_err());
        assert!(AdapterWeights::from_text("dim=1\nabc\n").is_err());
        assert!(AdapterWeights::from_text("dim=1\nNaN\n").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn init_is_bounded() {
        let w = AdapterWeights::init(64, &mut rng::seeded(1));
        assert!(w.a.iter().all(|v| v.abs() <= 0.125));
        assert_ne!(w, AdapterWeights::init(64, &mut rng::seeded(2)));
    }
}
