//! Per-category top TF-IDF words.
//!
//! Each category's document text is concatenated into one pseudo-document and
//! the corpus is the set of non-empty pseudo-documents:
//!
//! ```text
//! tf(w, c)  = count(w in c) / tokens(c)
//! idf(w)    = ln(n_docs / df(w))
//! score     = tf * idf
//! ```
//!
//! Only neutral (N) variants are read, once per document group, so pronoun
//! substitutions do not triple-count content words.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Dataset, Gender};
use crate::embeddings::tokenize;
use crate::error::{Error, Result};

/// Bundled English stopword list, one word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn default_stopwords() -> HashSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_stopwords(&text))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfTable {
    pub rows: Vec<(Category, Vec<(String, f64)>)>,
}

impl TfidfTable {
    pub fn get(&self, c: Category) -> Option<&[(String, f64)]> {
        self.rows
            .iter()
            .find(|(cat, _)| *cat == c)
            .map(|(_, w)| w.as_slice())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<24} Top-k TF-IDF words\n", "Category");
        for (c, words) in &self.rows {
            let cells: Vec<String> = words.iter().map(|(w, s)| format!("{w} ({s:.2})")).collect();
            out.push_str(&format!("{:<24} {}\n", c.label(), cells.join(", ")));
        }
        out
    }
}

fn terms<'a>(text: &'a str, stopwords: &'a HashSet<String>) -> impl Iterator<Item = String> + 'a {
    tokenize(text).filter(move |t| t.chars().count() > 1 && !stopwords.contains(t))
}

/// Category pseudo-documents built from `d`.
pub fn category_texts(d: &Dataset, include_queries: bool) -> BTreeMap<Category, String> {
    let mut texts: BTreeMap<Category, String> = BTreeMap::new();
    let mut seen_queries: BTreeSet<&str> = BTreeSet::new();
    for g in d.doc_groups() {
        let e = g.variants[Gender::N.index()];
        let text = texts.entry(e.category).or_default();
        if include_queries && seen_queries.insert(&e.query_id) {
            text.push_str(&e.query_text);
            text.push('\n');
        }
        text.push_str(&e.doc_title);
        text.push('\n');
        text.push_str(&e.doc_content);
        text.push('\n');
    }
    texts
}

pub fn top_words(
    d: &Dataset,
    k: usize,
    stopwords: &HashSet<String>,
    include_queries: bool,
) -> Result<TfidfTable> {
    if d.is_empty() {
        return Err(Error::EmptyDataset("no documents for TF-IDF".into()));
    }
    top_words_from_texts(&category_texts(d, include_queries), k, stopwords)
}

/// Ranks words per category by TF-IDF, ties broken lexicographically.
/// Categories without any counted token are skipped.
pub fn top_words_from_texts(
    texts: &BTreeMap<Category, String>,
    k: usize,
    stopwords: &HashSet<String>,
) -> Result<TfidfTable> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    let mut counts: Vec<(Category, HashMap<String, usize>, usize)> = Vec::new();
    for (&c, text) in texts {
        let mut tf: HashMap<String, usize> = HashMap::new();
        let mut total = 0;
        for t in terms(text, stopwords) {
            *tf.entry(t).or_default() += 1;
            total += 1;
        }
        if total == 0 {
            log::warn!("category {c} has no countable tokens; skipped");
            continue;
        }
        counts.push((c, tf, total));
    }
    if counts.is_empty() {
        return Err(Error::EmptyDataset(
            "no countable tokens in any category".into(),
        ));
    }

    let mut df: HashMap<&str, usize> = HashMap::new();
    for (_, tf, _) in &counts {
        for w in tf.keys() {
            *df.entry(w.as_str()).or_default() += 1;
        }
    }
    let n_docs = counts.len() as f64;

    let rows = counts
        .iter()
        .map(|(c, tf, total)| {
            let mut scored: Vec<(String, f64)> = tf
                .iter()
                .map(|(w, &n)| {
                    let idf = (n_docs / df[w.as_str()] as f64).ln();
                    (w.clone(), n as f64 / *total as f64 * idf)
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            scored.truncate(k);
            (*c, scored)
        })
        .collect();
    Ok(TfidfTable { rows })
}
