//! Query/document-variant datasets.
//!
//! A dataset is a flat list of [`Example`]s. Each query is paired with two
//! document groups (one relevant, one not) and every document group holds
//! exactly three gender variants of the same base document. Files are JSON
//! lines, one flat record per example:
//!
//! ```text
//! {"example_id":"career-q000-rel-M","query_id":"career-q000","doc_group_id":"career-q000-rel",
//!  "category":"career","gender":"M","query":"...","title":"...","content":"...","relevant":true}
//! ```

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{generate_synthetic, SynthSpec, IRRELEVANCE_MARKERS, RELEVANCE_MARKERS};

/// Topic categories in fixed report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "sex_relationships")]
    SexAndRelationships,
    #[serde(rename = "career")]
    Career,
    #[serde(rename = "child_care")]
    ChildCare,
    #[serde(rename = "appearance")]
    Appearance,
    #[serde(rename = "cognitive")]
    CognitiveCapabilities,
    #[serde(rename = "domestic")]
    DomesticWork,
    #[serde(rename = "physical")]
    PhysicalCapabilities,
}

impl Category {
    pub const COUNT: usize = 7;

    pub const ALL: [Category; Category::COUNT] = [
        Category::SexAndRelationships,
        Category::Career,
        Category::ChildCare,
        Category::Appearance,
        Category::CognitiveCapabilities,
        Category::DomesticWork,
        Category::PhysicalCapabilities,
    ];

    /// Position in [`Category::ALL`]; row/column index in report matrices.
    pub fn index(self) -> usize {
        self as usize
    }

    /// File-format token.
    pub fn token(self) -> &'static str {
        match self {
            Category::SexAndRelationships => "sex_relationships",
            Category::Career => "career",
            Category::ChildCare => "child_care",
            Category::Appearance => "appearance",
            Category::CognitiveCapabilities => "cognitive",
            Category::DomesticWork => "domestic",
            Category::PhysicalCapabilities => "physical",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Category::SexAndRelationships => "Sex & Relationships",
            Category::Career => "Career",
            Category::ChildCare => "Child Care",
            Category::Appearance => "Appearance",
            Category::CognitiveCapabilities => "Cognitive Capabilities",
            Category::DomesticWork => "Domestic Work",
            Category::PhysicalCapabilities => "Physical Capabilities",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.token() == s)
            .ok_or_else(|| Error::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
    N,
}

impl Gender {
    pub const ALL: [Gender; 3] = [Gender::M, Gender::F, Gender::N];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            Gender::M => "M",
            Gender::F => "F",
            Gender::N => "N",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Gender::ALL
            .into_iter()
            .find(|g| g.token() == s)
            .ok_or_else(|| Error::UnknownGender(s.to_string()))
    }
}

/// One (query, document-variant) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub example_id: String,
    pub query_id: String,
    pub doc_group_id: String,
    pub category: Category,
    pub gender: Gender,
    #[serde(rename = "query")]
    pub query_text: String,
    #[serde(rename = "title")]
    pub doc_title: String,
    #[serde(rename = "content")]
    pub doc_content: String,
    pub relevant: bool,
}

// Raw record with string tokens so unknown categories/genders get a precise error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    example_id: String,
    query_id: String,
    doc_group_id: String,
    category: String,
    gender: String,
    query: String,
    title: String,
    content: String,
    relevant: bool,
}

impl TryFrom<Record> for Example {
    type Error = Error;

    fn try_from(r: Record) -> Result<Self> {
        Ok(Example {
            category: r.category.parse()?,
            gender: r.gender.parse()?,
            example_id: r.example_id,
            query_id: r.query_id,
            doc_group_id: r.doc_group_id,
            query_text: r.query,
            doc_title: r.title,
            doc_content: r.content,
            relevant: r.relevant,
        })
    }
}

/// A validated, immutable collection of examples in file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    examples: Vec<Example>,
    by_category: [Vec<usize>; Category::COUNT],
}

impl Dataset {
    /// Validates the structural invariants and builds the category index.
    pub fn from_examples(examples: Vec<Example>) -> Result<Self> {
        validate(&examples)?;
        let mut by_category: [Vec<usize>; Category::COUNT] = Default::default();
        for (i, e) in examples.iter().enumerate() {
            by_category[e.category.index()].push(i);
        }
        Ok(Dataset {
            examples,
            by_category,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    pub fn category_len(&self, category: Category) -> usize {
        self.by_category[category.index()].len()
    }

    /// Categories with at least one example, in report order.
    pub fn categories(&self) -> Vec<Category> {
        Category::ALL
            .into_iter()
            .filter(|c| self.category_len(*c) > 0)
            .collect()
    }

    /// Returns the examples of one category as a dataset of its own.
    pub fn category(&self, category: Category) -> Dataset {
        let examples: Vec<Example> = self.by_category[category.index()]
            .iter()
            .map(|&i| self.examples[i].clone())
            .collect();
        let mut by_category: [Vec<usize>; Category::COUNT] = Default::default();
        by_category[category.index()] = (0..examples.len()).collect();
        Dataset {
            examples,
            by_category,
        }
    }

    /// Document groups in first-appearance order, each with its variants
    /// indexed by gender.
    pub fn doc_groups(&self) -> Vec<DocGroup<'_>> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, [Option<&Example>; 3]> = HashMap::new();
        for e in &self.examples {
            let slot = groups.entry(e.doc_group_id.as_str()).or_insert_with(|| {
                order.push(e.doc_group_id.as_str());
                [None; 3]
            });
            slot[e.gender.index()] = Some(e);
        }
        order
            .into_iter()
            .filter_map(|id| {
                let [m, f, n] = groups[id];
                Some(DocGroup {
                    id,
                    variants: [m?, f?, n?],
                })
            })
            .collect()
    }

    /// Writes the dataset in the line-oriented file format.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for e in &self.examples {
            let line = serde_json::to_string(e).expect("example serializes");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.examples {
            s.push_str(&serde_json::to_string(e).expect("example serializes"));
            s.push('\n');
        }
        s
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// The three gender variants of one base document.
#[derive(Debug, Clone, Copy)]
pub struct DocGroup<'a> {
    pub id: &'a str,
    /// Indexed by [`Gender::index`].
    pub variants: [&'a Example; 3],
}

impl DocGroup<'_> {
    pub fn relevant(&self) -> bool {
        self.variants[0].relevant
    }

    pub fn query_id(&self) -> &str {
        &self.variants[0].query_id
    }
}

/// Reads and validates a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// Parses dataset text; line numbers in errors are 1-based.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        examples.push(Example::try_from(record)?);
    }
    Dataset::from_examples(examples)
}

/// Partitions a dataset by category. Every category is present in the output;
/// unpopulated ones map to empty datasets.
pub fn split_by_category(d: &Dataset) -> BTreeMap<Category, Dataset> {
    Category::ALL
        .into_iter()
        .map(|c| (c, d.category(c)))
        .collect()
}

fn validate(examples: &[Example]) -> Result<()> {
    let mut ids = BTreeSet::new();
    for e in examples {
        if !ids.insert(e.example_id.as_str()) {
            return Err(Error::DuplicateExample(e.example_id.clone()));
        }
    }

    struct GroupInfo<'a> {
        query_id: &'a str,
        category: Category,
        relevant: bool,
        genders: Vec<Gender>,
    }
    let mut groups: BTreeMap<&str, GroupInfo<'_>> = BTreeMap::new();
    for e in examples {
        let g = groups
            .entry(e.doc_group_id.as_str())
            .or_insert_with(|| GroupInfo {
                query_id: &e.query_id,
                category: e.category,
                relevant: e.relevant,
                genders: Vec::new(),
            });
        if g.query_id != e.query_id || g.category != e.category || g.relevant != e.relevant {
            return Err(Error::InconsistentDocGroup {
                group: e.doc_group_id.clone(),
            });
        }
        g.genders.push(e.gender);
    }

    let mut queries: BTreeMap<&str, Vec<(&str, bool, Category)>> = BTreeMap::new();
    for (id, g) in &groups {
        let mut genders = g.genders.clone();
        genders.sort();
        if genders != Gender::ALL {
            return Err(Error::IncompleteDocGroup {
                group: id.to_string(),
                present: g.genders.iter().map(|g| g.token().to_string()).collect(),
            });
        }
        queries
            .entry(g.query_id)
            .or_default()
            .push((id, g.relevant, g.category));
    }

    for (query, docs) in &queries {
        let relevant = docs.iter().filter(|d| d.1).count();
        if docs.len() != 2 || relevant != 1 {
            return Err(Error::BadQueryPairing {
                query: query.to_string(),
                detail: format!("{} doc groups, {} relevant", docs.len(), relevant),
            });
        }
        if docs[0].2 != docs[1].2 {
            return Err(Error::BadQueryPairing {
                query: query.to_string(),
                detail: "doc groups span two categories".into(),
            });
        }
    }
    Ok(())
}
