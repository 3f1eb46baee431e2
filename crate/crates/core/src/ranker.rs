//! Document scoring and result ordering.
//!
//! A document's score for a query is
//!
//! ```text
//! score(d) = sum over query words q of  weight(q) * sum over sections i of  c_i * s_i * N_i(q, d)
//! ```
//!
//! where `s_i` is the section weight, `c_i` the query's section flag and
//! `N_i` the raw occurrence count. Sections are summed in the order folder,
//! name, body and words in query order, so equal inputs produce bit-equal
//! scores.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{filter_stopwords, tokenize, DocId, Section, StopWordSet, Token};
use crate::index::{IndexError, InvertedIndex};

#[derive(Debug, Error)]
pub enum RankError {
    #[error("query has no searchable words")]
    EmptyQuery,
    #[error("no section is enabled for the search")]
    NoSectionsEnabled,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("section weight for {0} must be finite and non-negative")]
    Invalid(Section),
    #[error("at least one section weight must be positive")]
    AllZero,
}

/// Per-section multipliers `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionWeights {
    pub folder: f64,
    pub name: f64,
    pub body: f64,
}

impl Default for SectionWeights {
    /// Folder 15, document name 10, body 1.
    fn default() -> Self {
        Self {
            folder: 15.0,
            name: 10.0,
            body: 1.0,
        }
    }
}

impl SectionWeights {
    pub fn new(folder: f64, name: f64, body: f64) -> Result<Self, WeightsError> {
        let weights = Self { folder, name, body };
        weights.validate()?;
        Ok(weights)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        for section in Section::ALL {
            let s = self.get(section);
            if !s.is_finite() || s < 0.0 {
                return Err(WeightsError::Invalid(section));
            }
        }
        if Section::ALL.iter().all(|s| self.get(*s) == 0.0) {
            return Err(WeightsError::AllZero);
        }
        Ok(())
    }

    pub fn get(&self, section: Section) -> f64 {
        match section {
            Section::Folder => self.folder,
            Section::Name => self.name,
            Section::Body => self.body,
        }
    }
}

/// Per-query section switches `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionFlags {
    pub folder: bool,
    pub name: bool,
    pub body: bool,
}

impl Default for SectionFlags {
    fn default() -> Self {
        Self::all()
    }
}

impl SectionFlags {
    pub fn all() -> Self {
        Self {
            folder: true,
            name: true,
            body: true,
        }
    }

    pub fn none() -> Self {
        Self {
            folder: false,
            name: false,
            body: false,
        }
    }

    pub fn only(sections: &[Section]) -> Self {
        let mut flags = Self::none();
        for s in sections {
            flags.set(*s, true);
        }
        flags
    }

    pub fn enabled(&self, section: Section) -> bool {
        match section {
            Section::Folder => self.folder,
            Section::Name => self.name,
            Section::Body => self.body,
        }
    }

    pub fn set(&mut self, section: Section, on: bool) {
        match section {
            Section::Folder => self.folder = on,
            Section::Name => self.name = on,
            Section::Body => self.body = on,
        }
    }

    pub fn any(&self) -> bool {
        self.folder || self.name || self.body
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    /// Any document matching at least one query word.
    #[default]
    Union,
    /// Only documents matching every query word in some enabled section.
    Intersection,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "union" | "or" => Ok(RetrievalMode::Union),
            "intersection" | "and" => Ok(RetrievalMode::Intersection),
            other => Err(format!("unknown retrieval mode '{other}'")),
        }
    }
}

/// A parsed query: distinct words in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub words: Vec<Token>,
    pub flags: SectionFlags,
    pub mode: RetrievalMode,
}

impl Query {
    /// Deduplicates `words`, keeping the first occurrence of each.
    pub fn new(
        words: impl IntoIterator<Item = Token>,
        flags: SectionFlags,
        mode: RetrievalMode,
    ) -> Self {
        let mut seen = BTreeSet::new();
        let words = words
            .into_iter()
            .filter(|w| seen.insert(w.clone()))
            .collect();
        Self { words, flags, mode }
    }

    /// Tokenizes `text` and drops stop-words.
    pub fn parse(
        text: &str,
        stopwords: &StopWordSet,
        flags: SectionFlags,
        mode: RetrievalMode,
    ) -> Self {
        Self::new(filter_stopwords(&tokenize(text), stopwords), flags, mode)
    }

    pub fn validate(&self) -> Result<(), RankError> {
        if self.words.is_empty() {
            return Err(RankError::EmptyQuery);
        }
        if !self.flags.any() {
            return Err(RankError::NoSectionsEnabled);
        }
        Ok(())
    }
}

/// Word weight lookup. Words without an entry weigh 1.
pub trait WordWeights {
    fn weight(&self, word: &Token) -> f64;
}

impl WordWeights for HashMap<Token, f64> {
    fn weight(&self, word: &Token) -> f64 {
        self.get(word).copied().unwrap_or(1.0)
    }
}

impl<T: WordWeights + ?Sized> WordWeights for &T {
    fn weight(&self, word: &Token) -> f64 {
        (**self).weight(word)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: DocId,
    pub score: f64,
    /// 1-based.
    pub position: usize,
}

pub fn section_score(
    idx: &InvertedIndex,
    word: &Token,
    doc_id: DocId,
    section: Section,
    weights: &SectionWeights,
) -> Result<f64, RankError> {
    let count = idx.occurrences(word, doc_id, section)?;
    Ok(weights.get(section) * f64::from(count))
}

pub fn word_score(
    idx: &InvertedIndex,
    word: &Token,
    doc_id: DocId,
    flags: &SectionFlags,
    weights: &SectionWeights,
) -> Result<f64, RankError> {
    let mut total = 0.0;
    for section in Section::ALL {
        if flags.enabled(section) {
            total += section_score(idx, word, doc_id, section, weights)?;
        }
    }
    Ok(total)
}

pub fn doc_score(
    idx: &InvertedIndex,
    query: &Query,
    doc_id: DocId,
    weights: &SectionWeights,
    vocab: &impl WordWeights,
) -> Result<f64, RankError> {
    let mut total = 0.0;
    for word in &query.words {
        total += vocab.weight(word) * word_score(idx, word, doc_id, &query.flags, weights)?;
    }
    Ok(total)
}

/// Ranks every document with a positive score, highest first; equal scores
/// are ordered by ascending document ID.
pub fn search(
    idx: &InvertedIndex,
    query: &Query,
    weights: &SectionWeights,
    vocab: &impl WordWeights,
) -> Result<Vec<RankedResult>, RankError> {
    query.validate()?;

    // matched[doc] = number of query words found in an enabled section
    let mut matched: HashMap<DocId, usize> = HashMap::new();
    for word in &query.words {
        let mut docs = BTreeSet::new();
        for section in Section::ALL.into_iter().filter(|s| query.flags.enabled(*s)) {
            docs.extend(idx.postings(section, word).iter().map(|p| p.doc_id));
        }
        for doc_id in docs {
            *matched.entry(doc_id).or_default() += 1;
        }
    }

    let mut scored = Vec::with_capacity(matched.len());
    for (doc_id, hits) in matched {
        if query.mode == RetrievalMode::Intersection && hits < query.words.len() {
            continue;
        }
        let score = doc_score(idx, query, doc_id, weights, vocab)?;
        if score > 0.0 {
            scored.push((doc_id, score));
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RankedResult {
            doc_id,
            score,
            position: i + 1,
        })
        .collect())
}

/// 1-based position of `doc_id` in `results`, if present.
pub fn position_of(results: &[RankedResult], doc_id: DocId) -> Option<usize> {
    results
        .iter()
        .find(|r| r.doc_id == doc_id)
        .map(|r| r.position)
}
