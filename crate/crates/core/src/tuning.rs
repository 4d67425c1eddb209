//! Grid search over the three gender-pair weights.
//!
//! Each grid point trains on one category and is scored on the six others:
//! `avg_star` is the mean accuracy and `avg_bias_gap` the mean per-cell
//! `|f_M - f_F|`. A point is feasible when its `avg_star` is at least the
//! unregularized baseline minus `max_accuracy_drop`. Among feasible points the
//! smallest gap wins, then the higher `avg_star`, then the smaller alpha sum,
//! then the lexicographically smaller alpha triple.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::adapter::TrainConfig;
use crate::corpus::{Category, Dataset};
use crate::debias::DebiasConfig;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{evaluate_row, par_map, BiasCorrectness};

/// `{0, 0.25, ..., 2.0}`.
pub fn default_grid() -> Vec<f64> {
    (0..=8).map(|i| f64::from(i) * 0.25).collect()
}

pub fn coarse_grid() -> Vec<f64> {
    vec![0.0, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSpec {
    pub grid: Vec<f64>,
    pub max_accuracy_drop: f64,
    pub train_category: Category,
    /// Pair-sampling seed for every grid point.
    pub seed: u64,
    pub bias_correctness: BiasCorrectness,
}

impl TuneSpec {
    pub fn new(train_category: Category) -> Self {
        TuneSpec {
            grid: default_grid(),
            max_accuracy_drop: 0.05,
            train_category,
            seed: 0,
            bias_correctness: BiasCorrectness::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("alpha grid is empty".into()));
        }
        if self.grid.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidConfig(
                "alpha grid values must be finite and >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.max_accuracy_drop) {
            return Err(Error::InvalidConfig(format!(
                "max_accuracy_drop must be in [0, 1), got {}",
                self.max_accuracy_drop
            )));
        }
        Ok(())
    }
}

/// One evaluated grid point, in the flat trace layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub alpha_mf: f64,
    pub alpha_mn: f64,
    pub alpha_fn: f64,
    pub avg_star: f64,
    pub avg_bias_gap: f64,
    pub feasible: bool,
}

impl TracePoint {
    pub fn alphas(&self) -> [f64; 3] {
        [self.alpha_mf, self.alpha_mn, self.alpha_fn]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub train_category: Category,
    pub chosen: [f64; 3],
    /// False when no grid point met the accuracy constraint; `chosen` is then
    /// the point with the highest `avg_star`.
    pub feasible: bool,
    pub baseline_avg_star: f64,
    pub debiased_avg_star: f64,
    pub baseline_bias_gap: f64,
    pub debiased_bias_gap: f64,
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Copy)]
struct PointScore {
    avg_star: f64,
    avg_bias_gap: f64,
}

fn evaluate_point(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    spec: &TuneSpec,
    alphas: [f64; 3],
) -> Result<PointScore> {
    let debias = DebiasConfig::new(alphas[0], alphas[1], alphas[2], spec.seed);
    let row = evaluate_row(
        d,
        spec.train_category,
        store,
        cfg,
        Some(&debias),
        spec.bias_correctness,
    )?;
    let others: Vec<usize> = Category::ALL
        .iter()
        .map(|c| c.index())
        .filter(|&i| i != spec.train_category.index())
        .collect();
    let n = others.len() as f64;
    Ok(PointScore {
        avg_star: others.iter().map(|&i| row.accuracy[i]).sum::<f64>() / n,
        avg_bias_gap: others.iter().map(|&i| row.bias[i].gap()).sum::<f64>() / n,
    })
}

fn preference(a: &TracePoint, b: &TracePoint) -> Ordering {
    a.avg_bias_gap
        .total_cmp(&b.avg_bias_gap)
        .then_with(|| b.avg_star.total_cmp(&a.avg_star))
        .then_with(|| {
            let (sa, sb) = (
                a.alphas().iter().sum::<f64>(),
                b.alphas().iter().sum::<f64>(),
            );
            sa.total_cmp(&sb)
        })
        .then_with(|| {
            a.alphas()
                .iter()
                .zip(b.alphas())
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Evaluates every triple of `spec.grid` (in `mf`, `mn`, `fn` nested order)
/// using `jobs` threads, and picks the constrained bias minimizer.
pub fn grid_search(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    spec: &TuneSpec,
    jobs: usize,
) -> Result<TuneResult> {
    spec.validate()?;
    cfg.validate()?;
    let mut points = Vec::with_capacity(spec.grid.len().pow(3));
    for &mf in &spec.grid {
        for &mn in &spec.grid {
            for &fnn in &spec.grid {
                points.push([mf, mn, fnn]);
            }
        }
    }
    let scores = par_map(jobs, &points, |a| evaluate_point(d, store, cfg, spec, *a))?;
    let baseline = match points.iter().position(|p| *p == [0.0; 3]) {
        Some(i) => scores[i],
        None => evaluate_point(d, store, cfg, spec, [0.0; 3])?,
    };
    let floor = baseline.avg_star - spec.max_accuracy_drop;
    let trace: Vec<TracePoint> = points
        .iter()
        .zip(&scores)
        .map(|(a, s)| TracePoint {
            alpha_mf: a[0],
            alpha_mn: a[1],
            alpha_fn: a[2],
            avg_star: s.avg_star,
            avg_bias_gap: s.avg_bias_gap,
            feasible: s.avg_star >= floor,
        })
        .collect();

    let best = trace
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| preference(a, b));
    let (chosen, feasible) = match best {
        Some(p) => (*p, true),
        None => {
            let closest = trace
                .iter()
                .max_by(|a, b| {
                    a.avg_star
                        .total_cmp(&b.avg_star)
                        .then_with(|| preference(b, a))
                })
                .expect("grid is non-empty");
            log::warn!(
                "no grid point keeps Average* within {} of baseline",
                spec.max_accuracy_drop
            );
            (*closest, false)
        }
    };
    Ok(TuneResult {
        train_category: spec.train_category,
        chosen: chosen.alphas(),
        feasible,
        baseline_avg_star: baseline.avg_star,
        debiased_avg_star: chosen.avg_star,
        baseline_bias_gap: baseline.avg_bias_gap,
        debiased_bias_gap: chosen.avg_bias_gap,
        trace,
    })
}
