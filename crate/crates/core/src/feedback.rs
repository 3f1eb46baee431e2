//! Weight updates driven by "this result was useful" evaluations.
//!
//! When a user marks document `d`, shown at position `p`, as useful for a
//! query, every query word that `d` contains gets
//!
//! ```text
//! w' = w + alpha * U * sqrt(p)
//! ```
//!
//! with the same `p` for all words. The query is then re-run against the new
//! weights and the document's movement `p' - p` is recorded.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocId, Token};
use crate::index::{IndexError, InvertedIndex};
use crate::metrics::delta;
use crate::ranker::{self, position_of, Query, RankError, SectionWeights};
use crate::store::{EvaluationId, QueryId, Store, StoreError};

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("unknown query {0}")]
    UnknownQuery(QueryId),
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("queries with fewer than two distinct words cannot be evaluated")]
    EvaluationRejected,
    #[error("document {0} contains none of the query words")]
    NoSharedWords(DocId),
    #[error("document {doc_id} is not at position {position} of query {query_id}'s results")]
    StaleEvaluation {
        query_id: QueryId,
        doc_id: DocId,
        position: usize,
    },
    #[error("position must be at least 1")]
    InvalidPosition,
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<IndexError> for FeedbackError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::UnknownDocument(d) => FeedbackError::UnknownDocument(d),
            other => FeedbackError::Rank(other.into()),
        }
    }
}

/// Learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub alpha: f64,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

/// Administrator-assigned competence per user. Users not listed get
/// `default_competence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTable {
    pub default_competence: f64,
    #[serde(default)]
    pub users: BTreeMap<String, f64>,
}

impl Default for UserTable {
    fn default() -> Self {
        Self {
            default_competence: 1.0,
            users: BTreeMap::new(),
        }
    }
}

impl UserTable {
    pub fn competence(&self, user_id: &str) -> f64 {
        self.users
            .get(user_id)
            .copied()
            .unwrap_or(self.default_competence)
    }

    pub fn with_user(mut self, user_id: impl Into<String>, competence: f64) -> Self {
        self.users.insert(user_id.into(), competence);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub query_id: QueryId,
    pub doc_id: DocId,
    /// Position the result was shown at, 1-based.
    pub position: usize,
    pub user_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordUpdate {
    pub word: Token,
    pub old_weight: f64,
    pub new_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    /// Assigned by [`Store::log_evaluation`].
    pub evaluation_id: EvaluationId,
    pub query_id: QueryId,
    pub doc_id: DocId,
    pub position: usize,
    pub user_id: String,
    pub competence: f64,
    pub alpha: f64,
    pub updated_words: Vec<WordUpdate>,
    pub p_before: usize,
    pub p_after: usize,
    pub delta: i64,
    pub timestamp: DateTime<Utc>,
}

/// A query can be evaluated only when it has at least two distinct words;
/// with one word every document's score scales by the same factor.
pub fn eligible(query: &Query) -> bool {
    query.words.iter().collect::<BTreeSet<_>>().len() >= 2
}

/// Query words contained anywhere in the document, regardless of the
/// query's section flags.
pub fn words_to_update(
    query: &Query,
    doc_id: DocId,
    idx: &InvertedIndex,
) -> Result<BTreeSet<Token>, FeedbackError> {
    let doc_words = idx.document_words(doc_id)?;
    let shared: BTreeSet<Token> = query
        .words
        .iter()
        .filter(|w| doc_words.contains(*w))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(FeedbackError::NoSharedWords(doc_id));
    }
    Ok(shared)
}

pub fn updated_weight(
    weight: f64,
    alpha: f64,
    competence: f64,
    position: usize,
) -> Result<f64, FeedbackError> {
    if position < 1 {
        return Err(FeedbackError::InvalidPosition);
    }
    Ok(weight + alpha * competence * (position as f64).sqrt())
}

/// Applies one evaluation to `store`: validates it against the logged query,
/// updates the weights, re-runs the query and records the position change.
///
/// Nothing in `store` changes unless the whole sequence succeeds. Callers
/// serialize evaluations by holding `&mut Store`.
pub fn apply_evaluation(
    req: &EvaluationRequest,
    idx: &InvertedIndex,
    store: &mut Store,
    params: &FeedbackParams,
    users: &UserTable,
    weights: &SectionWeights,
) -> Result<EvaluationRecord, FeedbackError> {
    let entry = store
        .query(req.query_id)
        .ok_or(FeedbackError::UnknownQuery(req.query_id))?;
    if !idx.contains(req.doc_id) {
        return Err(FeedbackError::UnknownDocument(req.doc_id));
    }
    if req.position < 1 {
        return Err(FeedbackError::InvalidPosition);
    }
    let query = entry.query();
    if !eligible(&query) {
        return Err(FeedbackError::EvaluationRejected);
    }
    let words = words_to_update(&query, req.doc_id, idx)?;
    let shown = entry.results.get(req.position - 1);
    if shown.is_none_or(|r| r.doc_id != req.doc_id) {
        return Err(FeedbackError::StaleEvaluation {
            query_id: req.query_id,
            doc_id: req.doc_id,
            position: req.position,
        });
    }
    let list_len = entry.results.len();

    let competence = users.competence(&req.user_id);
    let mut vocab = store.vocabulary().clone();
    let mut updated_words = Vec::with_capacity(words.len());
    for word in words {
        let old_weight = vocab.get(&word);
        let new_weight = updated_weight(old_weight, params.alpha, competence, req.position)?;
        updated_words.push(WordUpdate {
            word,
            old_weight,
            new_weight,
        });
    }
    vocab.apply(updated_words.iter().map(|u| (&u.word, u.new_weight)));

    let rerun = ranker::search(idx, &query, weights, &vocab)?;
    let p_after = position_of(&rerun, req.doc_id).unwrap_or(list_len + 1);

    let mut record = EvaluationRecord {
        evaluation_id: EvaluationId(0),
        query_id: req.query_id,
        doc_id: req.doc_id,
        position: req.position,
        user_id: req.user_id.clone(),
        competence,
        alpha: params.alpha,
        updated_words,
        p_before: req.position,
        p_after,
        delta: delta(req.position, p_after),
        timestamp: Utc::now(),
    };
    record.evaluation_id = store.log_evaluation(record.clone(), vocab)?;
    Ok(record)
}
