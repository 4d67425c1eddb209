//! Deterministic synthetic datasets with the same shape as the real corpus.
//!
//! Each category owns a slice of pseudo-words (`car000`, `car001`, ...). A
//! query draws [`QUERY_WORDS`] words from its slice. The relevant document
//! repeats all query words plus a few other slice words and carries shared
//! relevance markers; the non-relevant document uses only slice words absent
//! from the query and carries shared irrelevance markers. Gender variants are
//! produced by substituting a subject/object/possessive pronoun triple.
//!
//! With `bias_strength > 0` the male variant of each relevant document gets
//! `round(bias_strength * BIAS_COPIES_PER_UNIT)` extra relevance markers, which
//! plants a preference for male variants in any model that learns the markers.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Category, Dataset, Example, Gender};
use crate::error::{Error, Result};

pub const QUERY_WORDS: usize = 3;
const RELEVANT_EXTRA_WORDS: usize = 3;
const NON_RELEVANT_WORDS: usize = 6;
const MARKERS_PER_DOC: usize = 2;
const BIAS_COPIES_PER_UNIT: f64 = 2.0;

/// Shared across categories; correlated with relevance.
pub const RELEVANCE_MARKERS: [&str; 6] = [
    "helpful",
    "guide",
    "explains",
    "answer",
    "insight",
    "practical",
];

/// Shared across categories; correlated with non-relevance.
pub const IRRELEVANCE_MARKERS: [&str; 6] = [
    "unrelated",
    "advert",
    "listing",
    "misc",
    "trivia",
    "schedule",
];

const PRONOUNS: [[&str; 3]; 3] = [
    ["he", "him", "his"],
    ["she", "her", "hers"],
    ["they", "them", "their"],
];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub queries_per_category: usize,
    /// Total content vocabulary, split evenly across the seven categories.
    pub vocab_size: usize,
    pub bias_strength: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            queries_per_category: 5,
            vocab_size: 280,
            bias_strength: 0.0,
            seed: 7,
        }
    }
}

impl SynthSpec {
    fn slice_len(&self) -> usize {
        self.vocab_size / Category::COUNT
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries_per_category == 0 {
            return Err(Error::InvalidSynthSpec(
                "queries_per_category must be > 0".into(),
            ));
        }
        if self.vocab_size == 0 {
            return Err(Error::InvalidSynthSpec("vocab_size must be > 0".into()));
        }
        let need = QUERY_WORDS + NON_RELEVANT_WORDS;
        if self.slice_len() < need {
            return Err(Error::InvalidSynthSpec(format!(
                "vocab_size {} gives {} words per category, need at least {need}",
                self.vocab_size,
                self.slice_len()
            )));
        }
        if !(self.bias_strength.is_finite() && self.bias_strength >= 0.0) {
            return Err(Error::InvalidSynthSpec(
                "bias_strength must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

fn stem(c: Category) -> &'static str {
    match c {
        Category::SexAndRelationships => "rel",
        Category::Career => "car",
        Category::ChildCare => "chi",
        Category::Appearance => "app",
        Category::CognitiveCapabilities => "cog",
        Category::DomesticWork => "dom",
        Category::PhysicalCapabilities => "phy",
    }
}

struct BaseDoc {
    title: Vec<String>,
    words: Vec<String>,
    markers: Vec<&'static str>,
}

impl BaseDoc {
    /// Lays out `subj w.. poss w.. obj markers`.
    fn render(&self, gender: Gender, extra_markers: &[&'static str]) -> (String, String) {
        let [subj, obj, poss] = PRONOUNS[gender.index()];
        let third = self.words.len().div_ceil(3);
        let mut content: Vec<&str> = Vec::new();
        content.push(subj);
        content.extend(self.words[..third].iter().map(String::as_str));
        content.push(poss);
        content.extend(self.words[third..2 * third].iter().map(String::as_str));
        content.push(obj);
        content.extend(self.words[2 * third..].iter().map(String::as_str));
        content.extend(self.markers.iter().copied());
        content.extend(extra_markers.iter().copied());
        (self.title.join(" "), content.join(" "))
    }
}

fn pick_markers(rng: &mut ChaCha8Rng, pool: &[&'static str], n: usize) -> Vec<&'static str> {
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

/// Builds a synthetic dataset. Identical specs yield identical datasets.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let slice = spec.slice_len();
    let bias_copies = (spec.bias_strength * BIAS_COPIES_PER_UNIT).round() as usize;
    let mut examples = Vec::with_capacity(spec.queries_per_category * Category::COUNT * 6);

    for category in Category::ALL {
        let word = |i: usize| format!("{}{:03}", stem(category), i);
        for q in 0..spec.queries_per_category {
            let query_id = format!("{}-q{:03}", category.token(), q);
            let drawn = index::sample(&mut rng, slice, QUERY_WORDS + NON_RELEVANT_WORDS).into_vec();
            let (query_idx, rest) = drawn.split_at(QUERY_WORDS);
            let query_words: Vec<String> = query_idx.iter().map(|&i| word(i)).collect();

            // Relevant extras may be any slice word outside the query.
            let mut relevant_words = query_words.clone();
            for _ in 0..RELEVANT_EXTRA_WORDS {
                let w = loop {
                    let i = rng.gen_range(0..slice);
                    if !query_idx.contains(&i) {
                        break i;
                    }
                };
                relevant_words.push(word(w));
            }
            let relevant = BaseDoc {
                title: query_words[..2].to_vec(),
                words: relevant_words,
                markers: pick_markers(&mut rng, &RELEVANCE_MARKERS, MARKERS_PER_DOC),
            };
            let bias_markers = pick_markers(&mut rng, &RELEVANCE_MARKERS, bias_copies);

            let non_words: Vec<String> = rest.iter().map(|&i| word(i)).collect();
            let non_relevant = BaseDoc {
                title: non_words[..2].to_vec(),
                words: non_words,
                markers: pick_markers(&mut rng, &IRRELEVANCE_MARKERS, MARKERS_PER_DOC),
            };

            let query_text = query_words.join(" ");
            for (suffix, doc, is_relevant) in
                [("rel", &relevant, true), ("non", &non_relevant, false)]
            {
                let group = format!("{query_id}-{suffix}");
                for gender in Gender::ALL {
                    let extra: &[&'static str] = if is_relevant && gender == Gender::M {
                        &bias_markers
                    } else {
                        &[]
                    };
                    let (title, content) = doc.render(gender, extra);
                    examples.push(Example {
                        example_id: format!("{group}-{gender}"),
                        query_id: query_id.clone(),
                        doc_group_id: group.clone(),
                        category,
                        gender,
                        query_text: query_text.clone(),
                        doc_title: title,
                        doc_content: content,
                        relevant: is_relevant,
                    });
                }
            }
        }
    }
    Dataset::from_examples(examples)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn tokens(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn strip_pronouns(s: &str) -> Vec<&str> {
        tokens(s)
            .into_iter()
            .filter(|t| !PRONOUNS.iter().flatten().any(|p| p == t))
            .collect()
    }

    #[test]
    fn size_arithmetic() {
        let spec = SynthSpec {
            queries_per_category: 1,
            seed: 7,
            ..SynthSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.len(), 42);
        assert_eq!(d.categories().len(), 7);
    }

    #[test]
    fn unbiased_variants_differ_only_in_pronouns() {
        let d = generate_synthetic(&SynthSpec::default()).unwrap();
        for g in d.doc_groups() {
            let [m, f, n] = g.variants;
            assert_eq!(m.doc_title, f.doc_title);
            assert_eq!(
                strip_pronouns(&m.doc_content),
                strip_pronouns(&f.doc_content)
            );
            assert_eq!(
                strip_pronouns(&m.doc_content),
                strip_pronouns(&n.doc_content)
            );
            assert_ne!(m.doc_content, f.doc_content);
        }
    }

    #[test]
    fn overlap_constraints() {
        let d = generate_synthetic(&SynthSpec {
            queries_per_category: 4,
            ..SynthSpec::default()
        })
        .unwrap();
        for g in d.doc_groups() {
            let e = g.variants[Gender::N.index()];
            let query: BTreeSet<&str> = tokens(&e.query_text).into_iter().collect();
            let doc: BTreeSet<&str> = tokens(&e.doc_title)
                .into_iter()
                .chain(tokens(&e.doc_content))
                .collect();
            let shared = query.intersection(&doc).count() as f64 / query.len() as f64;
            if e.relevant {
                assert!(shared >= 0.5, "{shared}");
            } else {
                assert!(shared <= 0.1, "{shared}");
            }
        }
    }

    #[test]
    fn bias_adds_markers_to_male_relevant_only() {
        let d = generate_synthetic(&SynthSpec {
            bias_strength: 2.0,
            ..SynthSpec::default()
        })
        .unwrap();
        for g in d.doc_groups() {
            let [m, f, _] = g.variants;
            let (lm, lf) = (tokens(&m.doc_content).len(), tokens(&f.doc_content).len());
            if g.relevant() {
                assert_eq!(lm, lf + 4);
            } else {
                assert_eq!(lm, lf);
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let spec = SynthSpec {
            bias_strength: 1.5,
            seed: 99,
            ..SynthSpec::default()
        };
        let a = generate_synthetic(&spec).unwrap().to_jsonl();
        let b = generate_synthetic(&spec).unwrap().to_jsonl();
        assert_eq!(a, b);
        let other = generate_synthetic(&SynthSpec { seed: 100, ..spec })
            .unwrap()
            .to_jsonl();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_bad_specs() {
        let zero = SynthSpec {
            queries_per_category: 0,
            ..SynthSpec::default()
        };
        assert!(matches!(
            generate_synthetic(&zero),
            Err(Error::InvalidSynthSpec(_))
        ));
        let tiny = SynthSpec {
            vocab_size: 20,
            ..SynthSpec::default()
        };
        assert!(matches!(
            generate_synthetic(&tiny),
            Err(Error::InvalidSynthSpec(_))
        ));
        let neg = SynthSpec {
            bias_strength: -1.0,
            ..SynthSpec::default()
        };
        assert!(generate_synthetic(&neg).is_err());
    }
}
