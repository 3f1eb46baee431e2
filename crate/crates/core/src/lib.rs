//! Sectioned full-text search whose ranking is tuned by explicit expert
//! feedback.
//!
//! Documents have three searchable sections (folder name, document name and
//! body). A query word contributes `s * N` per section, the per-section
//! contributions are summed under the query's section flags, and every word's
//! sum is multiplied by that word's learned weight. Whenever a user marks a
//! result as useful, every query word contained in the document has its weight
//! raised by `alpha * U * sqrt(p)`, where `U` is the user's competence and `p`
//! the position the result was shown at. The system then re-runs the query and
//! records how far the document moved.

pub mod corpus;
pub mod engine;
pub mod feedback;
pub mod index;
pub mod metrics;
pub mod ranker;
pub mod store;

pub use corpus::{Corpus, DocId, Document, Section, StopWordSet, Token};
pub use engine::{Engine, EngineError, SearchOutcome, Settings};
pub use feedback::{EvaluationRecord, EvaluationRequest, FeedbackError, FeedbackParams, UserTable};
pub use index::InvertedIndex;
pub use metrics::SessionReport;
pub use ranker::{Query, RankedResult, RetrievalMode, SectionFlags, SectionWeights, WordWeights};
pub use store::{
    EvaluationId, QueryId, QueryLogEntry, Store, VocabularySnapshot, WeightVocabulary,
};
