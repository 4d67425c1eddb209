//! Zero-shot evaluation and gender-bias measurement.
//!
//! For each training category an adapter is fit on that category alone and
//! evaluated on all seven. Accuracy is thresholded classification accuracy at
//! `z >= 0`. `Average*` is the row mean without the diagonal (in-category,
//! evaluated on the training data itself).
//!
//! Bias cells look at relevant document groups: the variant with the unique
//! highest logit names the preferred gender. Groups whose maximum is shared by
//! two or more variants are discarded as ties; the others count only if they
//! pass the configured [`BiasCorrectness`] rule.

mod report;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapter::{logits, train_adapter, AdapterWeights, TrainConfig};
use crate::corpus::{Category, Dataset, Gender};
use crate::debias::DebiasConfig;
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};

pub use report::{
    format_bias_table, format_comparison_table, format_matrix_table, records_to_reports,
    reports_to_records, CellRecord,
};

/// Which relevant groups count toward bias fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasCorrectness {
    /// Every untied group counts, whatever its classification.
    Any,
    /// The highest-logit variant must be classified relevant.
    #[default]
    Argmax,
    /// All three variants must be classified relevant.
    All,
}

impl FromStr for BiasCorrectness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(BiasCorrectness::Any),
            "argmax" => Ok(BiasCorrectness::Argmax),
            "all" => Ok(BiasCorrectness::All),
            other => Err(Error::InvalidConfig(format!(
                "bias correctness must be any|argmax|all, got `{other}`"
            ))),
        }
    }
}

/// Fraction of examples whose thresholded prediction (`z >= 0` means
/// relevant) matches the label.
pub fn accuracy(d: &Dataset, store: &EmbeddingStore, w: &AdapterWeights) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset("accuracy is undefined".into()));
    }
    let z = logits(d, store, w)?;
    Ok(accuracy_from_logits(d, &z))
}

fn accuracy_from_logits(d: &Dataset, z: &[f64]) -> f64 {
    let correct = d
        .iter()
        .zip(z)
        .filter(|(e, z)| (**z >= 0.0) == e.relevant)
        .count();
    correct as f64 / d.len() as f64
}

/// Share of queries whose relevant group has a higher mean logit than the
/// non-relevant group.
pub fn ranking_accuracy(d: &Dataset, store: &EmbeddingStore, w: &AdapterWeights) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyDataset("ranking accuracy is undefined".into()));
    }
    let z = logits(d, store, w)?;
    Ok(ranking_from_logits(d, &z))
}

fn ranking_from_logits(d: &Dataset, z: &[f64]) -> f64 {
    use std::collections::BTreeMap;
    // query -> (relevant sum, non-relevant sum)
    let mut per_query: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (e, z) in d.iter().zip(z) {
        let entry = per_query.entry(&e.query_id).or_default();
        if e.relevant {
            entry.0 += z;
        } else {
            entry.1 += z;
        }
    }
    let wins = per_query.values().filter(|(r, n)| r > n).count();
    wins as f64 / per_query.len() as f64
}

/// Row mean excluding the entry at `diagonal`.
pub fn average_star(row: &[f64], diagonal: usize) -> f64 {
    let (sum, n) = row
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != diagonal)
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    /// `accuracy[train][test]`, indexed by [`Category::index`].
    pub accuracy: [[f64; Category::COUNT]; Category::COUNT],
    pub average_star: [f64; Category::COUNT],
    /// Per-query ranking diagnostic with the same layout as `accuracy`.
    pub ranking: [[f64; Category::COUNT]; Category::COUNT],
}

impl EvalMatrix {
    pub fn from_rows(
        accuracy: [[f64; Category::COUNT]; Category::COUNT],
        ranking: [[f64; Category::COUNT]; Category::COUNT],
    ) -> Self {
        let mut stars = [0.0; Category::COUNT];
        for (r, row) in accuracy.iter().enumerate() {
            stars[r] = average_star(row, r);
        }
        EvalMatrix {
            accuracy,
            average_star: stars,
            ranking,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasCell {
    pub f_m: f64,
    pub f_f: f64,
    pub f_n: f64,
    pub counted: usize,
    pub discarded_ties: usize,
}

impl BiasCell {
    pub fn fractions(&self) -> [f64; 3] {
        [self.f_m, self.f_f, self.f_n]
    }

    pub fn gap(&self) -> f64 {
        (self.f_m - self.f_f).abs()
    }
}

/// Gender with the unique highest logit, or `None` on a tie at the top.
pub fn argmax_gender(z: [f64; 3]) -> Option<Gender> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut at_max = Gender::ALL.into_iter().filter(|g| z[g.index()] == max);
    let first = at_max.next()?;
    at_max.next().is_none().then_some(first)
}

/// Bias cell from per-group variant logits `[z_M, z_F, z_N]` of relevant groups.
pub fn bias_cell_from_logits(groups: &[[f64; 3]], mode: BiasCorrectness) -> BiasCell {
    let mut counts = [0usize; 3];
    let mut cell = BiasCell::default();
    for z in groups {
        let Some(g) = argmax_gender(*z) else {
            cell.discarded_ties += 1;
            continue;
        };
        let ok = match mode {
            BiasCorrectness::Any => true,
            BiasCorrectness::Argmax => z[g.index()] >= 0.0,
            BiasCorrectness::All => z.iter().all(|v| *v >= 0.0),
        };
        if ok {
            counts[g.index()] += 1;
        }
    }
    cell.counted = counts.iter().sum();
    if cell.counted > 0 {
        let n = cell.counted as f64;
        cell.f_m = counts[0] as f64 / n;
        cell.f_f = counts[1] as f64 / n;
        cell.f_n = counts[2] as f64 / n;
    }
    cell
}

fn relevant_group_logits(d: &Dataset, z: &[f64]) -> Vec<[f64; 3]> {
    let index: std::collections::HashMap<&str, usize> = d
        .iter()
        .enumerate()
        .map(|(i, e)| (e.example_id.as_str(), i))
        .collect();
    d.doc_groups()
        .into_iter()
        .filter(|g| g.relevant())
        .map(|g| g.variants.map(|e| z[index[e.example_id.as_str()]]))
        .collect()
}

pub fn bias_fractions(
    d: &Dataset,
    store: &EmbeddingStore,
    w: &AdapterWeights,
    mode: BiasCorrectness,
) -> Result<BiasCell> {
    let z = logits(d, store, w)?;
    bias_from_logits(d, &z, mode)
}

fn bias_from_logits(d: &Dataset, z: &[f64], mode: BiasCorrectness) -> Result<BiasCell> {
    let groups = relevant_group_logits(d, z);
    if groups.is_empty() {
        return Err(Error::EmptyDataset(
            "no complete relevant doc groups".into(),
        ));
    }
    Ok(bias_cell_from_logits(&groups, mode))
}

/// Mean `|z_M - z_F|` over the relevant groups of `d`.
pub fn mean_mf_logit_gap(d: &Dataset, store: &EmbeddingStore, w: &AdapterWeights) -> Result<f64> {
    let z = logits(d, store, w)?;
    let groups = relevant_group_logits(d, &z);
    if groups.is_empty() {
        return Err(Error::EmptyDataset(
            "no complete relevant doc groups".into(),
        ));
    }
    Ok(groups.iter().map(|g| (g[0] - g[1]).abs()).sum::<f64>() / groups.len() as f64)
}

/// 7x7 grid of bias cells with per-train-row averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub train: Vec<Category>,
    pub test: Vec<Category>,
    /// `cells[row][col]` for `train[row]`, `test[col]`.
    pub cells: Vec<Vec<BiasCell>>,
}

impl BiasReport {
    pub fn new(
        train: Vec<Category>,
        test: Vec<Category>,
        cells: Vec<Vec<BiasCell>>,
    ) -> Result<Self> {
        if cells.len() != train.len() || cells.iter().any(|r| r.len() != test.len()) {
            return Err(Error::GridMismatch(format!(
                "cells do not form a {}x{} grid",
                train.len(),
                test.len()
            )));
        }
        Ok(BiasReport { train, test, cells })
    }

    /// Unweighted mean of the row's (M, F, N) fractions over all test columns.
    pub fn row_average(&self, row: usize) -> [f64; 3] {
        let cells = &self.cells[row];
        let mut avg = [0.0; 3];
        for c in cells {
            for (a, f) in avg.iter_mut().zip(c.fractions()) {
                *a += f;
            }
        }
        avg.map(|a| a / cells.len() as f64)
    }

    pub fn row_gap(&self, row: usize) -> f64 {
        let [m, f, _] = self.row_average(row);
        (m - f).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub category: Category,
    pub before: [f64; 3],
    pub after: [f64; 3],
    pub gap_before: f64,
    pub gap_after: f64,
    pub decreased: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasComparison {
    pub rows: Vec<ComparisonRow>,
}

pub fn compare_bias(before: &BiasReport, after: &BiasReport) -> Result<BiasComparison> {
    if before.train != after.train || before.test != after.test {
        return Err(Error::GridMismatch(format!(
            "before has {}x{} cells, after has {}x{}",
            before.train.len(),
            before.test.len(),
            after.train.len(),
            after.test.len()
        )));
    }
    let rows = before
        .train
        .iter()
        .enumerate()
        .map(|(r, &category)| {
            let (b, a) = (before.row_average(r), after.row_average(r));
            let gap_before = (b[0] - b[1]).abs();
            let gap_after = (a[0] - a[1]).abs();
            ComparisonRow {
                category,
                before: b,
                after: a,
                gap_before,
                gap_after,
                decreased: gap_after < gap_before,
            }
        })
        .collect();
    Ok(BiasComparison { rows })
}

/// Everything measured for one training category.
#[derive(Debug, Clone, PartialEq)]
pub struct RowResult {
    pub train: Category,
    pub weights: AdapterWeights,
    pub accuracy: [f64; Category::COUNT],
    pub ranking: [f64; Category::COUNT],
    pub bias: [BiasCell; Category::COUNT],
}

/// Trains on `train` and evaluates on every category of `d`.
pub fn evaluate_row(
    d: &Dataset,
    train: Category,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    debias: Option<&DebiasConfig>,
    mode: BiasCorrectness,
) -> Result<RowResult> {
    let parts: Vec<Dataset> = Category::ALL.iter().map(|c| d.category(*c)).collect();
    for (c, p) in Category::ALL.iter().zip(&parts) {
        if p.is_empty() {
            return Err(Error::EmptyCategory(c.token().into()));
        }
    }
    let weights = train_adapter(&parts[train.index()], store, cfg, debias)?;
    let mut accuracy = [0.0; Category::COUNT];
    let mut ranking = [0.0; Category::COUNT];
    let mut bias = [BiasCell::default(); Category::COUNT];
    for (i, part) in parts.iter().enumerate() {
        let z = logits(part, store, &weights)?;
        accuracy[i] = accuracy_from_logits(part, &z);
        ranking[i] = ranking_from_logits(part, &z);
        bias[i] = bias_from_logits(part, &z, mode)?;
    }
    Ok(RowResult {
        train,
        weights,
        accuracy,
        ranking,
        bias,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroShot {
    pub matrix: EvalMatrix,
    pub bias: BiasReport,
    pub weights: Vec<AdapterWeights>,
}

/// Full train x test sweep. `jobs` threads train rows concurrently; results
/// are assembled in category order.
pub fn run_zero_shot(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    debias: Option<&DebiasConfig>,
    mode: BiasCorrectness,
    jobs: usize,
) -> Result<ZeroShot> {
    for c in Category::ALL {
        if d.category_len(c) == 0 {
            return Err(Error::EmptyCategory(c.token().into()));
        }
    }
    let rows = par_map(jobs, &Category::ALL, |&c| {
        evaluate_row(d, c, store, cfg, debias, mode)
    })?;
    let mut accuracy = [[0.0; Category::COUNT]; Category::COUNT];
    let mut ranking = [[0.0; Category::COUNT]; Category::COUNT];
    let mut cells = Vec::with_capacity(Category::COUNT);
    let mut weights = Vec::with_capacity(Category::COUNT);
    for row in rows {
        let r = row.train.index();
        accuracy[r] = row.accuracy;
        ranking[r] = row.ranking;
        cells.push(row.bias.to_vec());
        weights.push(row.weights);
    }
    Ok(ZeroShot {
        matrix: EvalMatrix::from_rows(accuracy, ranking),
        bias: BiasReport::new(Category::ALL.to_vec(), Category::ALL.to_vec(), cells)?,
        weights,
    })
}

pub fn zero_shot_matrix(
    d: &Dataset,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    debias: Option<&DebiasConfig>,
) -> Result<EvalMatrix> {
    run_zero_shot(d, store, cfg, debias, BiasCorrectness::default(), 1).map(|z| z.matrix)
}

/// Ordered parallel map on a dedicated pool of `jobs` threads; `jobs <= 1`
/// runs inline.
pub(crate) fn par_map<T, U, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthSpec};
    use crate::embeddings::{encode_dataset, HashEncoderConfig};

    fn synth() -> (Dataset, EmbeddingStore) {
        let d = generate_synthetic(&SynthSpec {
            queries_per_category: 2,
            ..SynthSpec::default()
        })
        .unwrap();
        let s = encode_dataset(
            &d,
            &HashEncoderConfig {
                dim: 32,
                seed: 1,
                normalize: true,
            },
        )
        .unwrap();
        (d, s)
    }

    #[test]
    fn zero_weights_give_half() {
        let (d, s) = synth();
        let w = AdapterWeights::zeros(32);
        assert_eq!(accuracy(&d, &s, &w).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_counts() {
        let (d, _) = synth();
        let four = d.category(Category::Career);
        // Logits chosen so three of the first four examples are right.
        let mut z = vec![0.0; four.len()];
        let labels: Vec<bool> = four.iter().map(|e| e.relevant).collect();
        for (i, l) in labels.iter().enumerate() {
            z[i] = if *l { 1.0 } else { -1.0 };
        }
        let acc = accuracy_from_logits(&four, &z);
        assert_eq!(acc, 1.0);
        z[0] = -z[0];
        assert!(
            (accuracy_from_logits(&four, &z) - (four.len() as f64 - 1.0) / four.len() as f64).abs()
                < 1e-15
        );
    }

    #[test]
    fn empty_dataset_accuracy_errors() {
        let (_, s) = synth();
        let empty = Dataset::default();
        assert!(accuracy(&empty, &s, &AdapterWeights::zeros(32)).is_err());
    }

    #[test]
    fn average_star_values() {
        let row = [0.9565, 0.4833, 0.4167, 0.5238, 0.5139, 0.5000, 0.4912];
        assert!((average_star(&row, 0) - 0.4882).abs() <= 1e-4);
        let mut perturbed = row;
        perturbed[0] = 0.0;
        assert_eq!(average_star(&perturbed, 0), average_star(&row, 0));
    }

    #[test]
    fn tie_and_argmax_rules() {
        assert_eq!(argmax_gender([2.0, 1.0, 0.0]), Some(Gender::M));
        assert_eq!(argmax_gender([1.0, 1.0, 0.0]), None);
        assert_eq!(argmax_gender([0.0, 1.0, 1.0]), None);
        assert_eq!(argmax_gender([-3.0, -1.0, -2.0]), Some(Gender::F));

        let cell = bias_cell_from_logits(&[[2.0, 1.0, 0.0]], BiasCorrectness::Argmax);
        assert_eq!((cell.f_m, cell.counted), (1.0, 1));
        let cell = bias_cell_from_logits(&[[1.0, 1.0, 0.0]], BiasCorrectness::Argmax);
        assert_eq!((cell.counted, cell.discarded_ties), (0, 1));
        assert_eq!(cell.fractions(), [0.0; 3]);
    }

    #[test]
    fn three_groups_one_each() {
        let groups = [[3.0, 1.0, 2.0], [0.5, 1.5, 1.0], [0.1, 0.2, 0.3]];
        let cell = bias_cell_from_logits(&groups, BiasCorrectness::Argmax);
        assert_eq!(cell.counted, 3);
        for f in cell.fractions() {
            assert!((f - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn correctness_modes() {
        // Argmax misclassified; argmax ok with another variant wrong; all ok.
        let groups = [[-0.1, -0.5, -0.9], [1.0, -0.5, 0.2], [0.3, 0.9, 0.4]];
        let any = bias_cell_from_logits(&groups, BiasCorrectness::Any);
        let argmax = bias_cell_from_logits(&groups, BiasCorrectness::Argmax);
        let all = bias_cell_from_logits(&groups, BiasCorrectness::All);
        assert_eq!((any.counted, argmax.counted, all.counted), (3, 2, 1));
        assert_eq!(all.f_f, 1.0);
        assert_eq!(argmax.f_m, 0.5);
        assert!("sometimes".parse::<BiasCorrectness>().is_err());
        assert_eq!(
            "all".parse::<BiasCorrectness>().unwrap(),
            BiasCorrectness::All
        );
    }

    #[test]
    fn compare_identical_reports() {
        let cell = BiasCell {
            f_m: 0.5,
            f_f: 0.25,
            f_n: 0.25,
            counted: 4,
            discarded_ties: 0,
        };
        let r = BiasReport::new(
            vec![Category::Career],
            vec![Category::Career, Category::ChildCare],
            vec![vec![cell, cell]],
        )
        .unwrap();
        let c = compare_bias(&r, &r).unwrap();
        assert_eq!(c.rows[0].gap_before, c.rows[0].gap_after);
        assert!(!c.rows[0].decreased);
        let other = BiasReport::new(
            vec![Category::Career],
            vec![Category::Career],
            vec![vec![cell]],
        )
        .unwrap();
        assert!(matches!(
            compare_bias(&r, &other),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn zero_shot_requires_every_category() {
        let (d, s) = synth();
        let only = d.category(Category::Career);
        let err = run_zero_shot(
            &only,
            &s,
            &TrainConfig::default(),
            None,
            BiasCorrectness::Argmax,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyCategory(_)));
    }

    #[test]
    fn zero_shot_is_deterministic_and_parallel_safe() {
        let (d, s) = synth();
        let cfg = TrainConfig {
            lr: 0.05,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = run_zero_shot(&d, &s, &cfg, None, BiasCorrectness::Argmax, 1).unwrap();
        let b = run_zero_shot(&d, &s, &cfg, None, BiasCorrectness::Argmax, 3).unwrap();
        assert_eq!(a, b);
        for r in 0..7 {
            for v in a.matrix.accuracy[r] {
                assert!((0.0..=1.0).contains(&v));
            }
            for c in &a.bias.cells[r] {
                if c.counted > 0 {
                    assert!((c.f_m + c.f_f + c.f_n - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
