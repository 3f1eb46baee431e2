//! The assembled system: an immutable corpus and index plus the mutable store.
//!
//! Searches rank against a vocabulary snapshot taken under a short lock and
//! then log the query. Evaluations hold the store lock for their whole
//! read-update-rerank-persist sequence, so concurrent searches see either
//! the old or the new vocabulary, never a mix.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::Utc;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, Corpus, CorpusError, DocId, Document, StopWordSet, Token};
use crate::feedback::{
    self, EvaluationRecord, EvaluationRequest, FeedbackError, FeedbackParams, UserTable,
};
use crate::index::InvertedIndex;
use crate::metrics::{session_report, SessionReport};
use crate::ranker::{
    self, Query, RankError, RankedResult, RetrievalMode, SectionFlags, SectionWeights,
};
use crate::store::{QueryId, QueryLogEntry, Store, StoreError, VocabularySnapshot};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const SETTINGS_FILE: &str = "settings.json";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: store is not initialized")]
    NotInitialized(PathBuf),
}

fn default_alpha() -> f64 {
    1.0
}

/// Ranking and learning parameters. Defaults: section weights
/// (folder 15, name 10, body 1), alpha 1, competence 1, union retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    #[serde(default)]
    pub section_weights: SectionWeights,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub users: UserTable,
    #[serde(default)]
    pub retrieval_mode: RetrievalMode,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            section_weights: SectionWeights::default(),
            alpha: default_alpha(),
            users: UserTable::default(),
            retrieval_mode: RetrievalMode::default(),
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), EngineError> {
        let invalid = |m: String| Err(EngineError::InvalidSettings(m));
        if let Err(e) = self.section_weights.validate() {
            return invalid(e.to_string());
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return invalid(format!(
                "alpha must be finite and non-negative, got {}",
                self.alpha
            ));
        }
        let competences = std::iter::once(("<default>", self.users.default_competence))
            .chain(self.users.users.iter().map(|(k, v)| (k.as_str(), *v)));
        for (user, u) in competences {
            if !u.is_finite() || u <= 0.0 {
                return invalid(format!("competence of {user} must be positive, got {u}"));
            }
        }
        Ok(())
    }

    pub fn feedback_params(&self) -> FeedbackParams {
        FeedbackParams { alpha: self.alpha }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub query_id: QueryId,
    pub words: Vec<Token>,
    pub eligible_for_evaluation: bool,
    pub vocab_version: u64,
    pub results: Vec<RankedResult>,
}

#[derive(Debug)]
pub struct Engine {
    dir: Option<PathBuf>,
    corpus: Corpus,
    index: InvertedIndex,
    stopwords: StopWordSet,
    settings: Settings,
    store: Mutex<Store>,
}

impl Engine {
    /// A non-persistent engine.
    pub fn in_memory(
        corpus: Corpus,
        stopwords: StopWordSet,
        settings: Settings,
    ) -> Result<Self, EngineError> {
        settings.validate()?;
        Ok(Self {
            dir: None,
            index: InvertedIndex::build(corpus.documents()),
            corpus,
            stopwords,
            settings,
            store: Mutex::new(Store::in_memory()),
        })
    }

    pub fn is_initialized(dir: &Path) -> bool {
        dir.join(CORPUS_FILE).is_file() && Store::is_initialized(dir)
    }

    /// Creates a fresh store directory for `corpus`.
    pub fn init(
        dir: &Path,
        corpus: Corpus,
        stopwords: StopWordSet,
        settings: Settings,
    ) -> Result<Self, EngineError> {
        settings.validate()?;
        let store = Store::create(dir)?;
        corpus.write_jsonl(&dir.join(CORPUS_FILE))?;
        write(&dir.join(STOPWORDS_FILE), stopwords.to_text().as_bytes())?;
        let json = serde_json::to_vec_pretty(&settings).expect("settings serialize");
        write(&dir.join(SETTINGS_FILE), &json)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            index: InvertedIndex::build(corpus.documents()),
            corpus,
            stopwords,
            settings,
            store: Mutex::new(store),
        })
    }

    pub fn open(dir: &Path) -> Result<Self, EngineError> {
        Self::open_with(dir, None)
    }

    /// Opens `dir`, replacing the stored settings with `settings` when given.
    pub fn open_with(dir: &Path, settings: Option<Settings>) -> Result<Self, EngineError> {
        if !Self::is_initialized(dir) {
            return Err(EngineError::NotInitialized(dir.to_path_buf()));
        }
        let corpus = corpus::ingest_jsonl(&dir.join(CORPUS_FILE))?;
        let stopwords = StopWordSet::load(&dir.join(STOPWORDS_FILE))?;
        let settings = match settings {
            Some(s) => s,
            None => {
                let path = dir.join(SETTINGS_FILE);
                let bytes = fs::read(&path).map_err(|source| EngineError::Io {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_slice(&bytes)
                    .map_err(|e| EngineError::InvalidSettings(format!("{}: {e}", path.display())))?
            }
        };
        settings.validate()?;
        let store = Store::open(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            index: InvertedIndex::build(corpus.documents()),
            corpus,
            stopwords,
            settings,
            store: Mutex::new(store),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn stopwords(&self) -> &StopWordSet {
        &self.stopwords
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn document(&self, doc_id: DocId) -> Option<&Document> {
        self.corpus.get(doc_id)
    }

    pub fn snapshot(&self) -> VocabularySnapshot {
        self.store.lock().snapshot()
    }

    pub fn parse_query(
        &self,
        text: &str,
        flags: SectionFlags,
        mode: Option<RetrievalMode>,
    ) -> Query {
        Query::parse(
            text,
            &self.stopwords,
            flags,
            mode.unwrap_or(self.settings.retrieval_mode),
        )
    }

    /// Ranks `text` against the current vocabulary and logs the query.
    pub fn search(
        &self,
        text: &str,
        flags: SectionFlags,
        mode: Option<RetrievalMode>,
        user_id: &str,
    ) -> Result<SearchOutcome, EngineError> {
        let query = self.parse_query(text, flags, mode);
        let vocab = self.snapshot();
        let results = ranker::search(&self.index, &query, &self.settings.section_weights, &vocab)?;
        let entry = QueryLogEntry {
            query_id: QueryId(0),
            text: text.to_string(),
            words: query.words.clone(),
            flags: query.flags,
            mode: query.mode,
            user_id: user_id.to_string(),
            timestamp: Utc::now(),
            vocab_version: vocab.version(),
            results: results.clone(),
        };
        let query_id = self.store.lock().log_query(entry)?;
        Ok(SearchOutcome {
            query_id,
            eligible_for_evaluation: feedback::eligible(&query),
            words: query.words,
            vocab_version: vocab.version(),
            results,
        })
    }

    pub fn query(&self, query_id: QueryId) -> Option<QueryLogEntry> {
        self.store.lock().query(query_id).cloned()
    }

    /// Whether the evaluation affordance should be offered for `doc_id`
    /// reached from position `position` of query `query_id`.
    pub fn can_evaluate(&self, doc_id: DocId, query_id: QueryId, position: usize) -> bool {
        let store = self.store.lock();
        let Some(entry) = store.query(query_id) else {
            return false;
        };
        feedback::eligible(&entry.query())
            && position >= 1
            && entry
                .results
                .get(position - 1)
                .is_some_and(|r| r.doc_id == doc_id)
    }

    pub fn evaluate(&self, req: &EvaluationRequest) -> Result<EvaluationRecord, EngineError> {
        let mut store = self.store.lock();
        Ok(feedback::apply_evaluation(
            req,
            &self.index,
            &mut store,
            &self.settings.feedback_params(),
            &self.settings.users,
            &self.settings.section_weights,
        )?)
    }

    pub fn evaluations(&self) -> Vec<EvaluationRecord> {
        self.store.lock().evaluations().to_vec()
    }

    pub fn report(&self) -> SessionReport {
        session_report(self.store.lock().evaluations())
    }

    /// Runs `f` with the store locked.
    pub fn with_store<R>(&self, f: impl FnOnce(&Store) -> R) -> R {
        f(&self.store.lock())
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), EngineError> {
    fs::write(path, bytes).map_err(|source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    })
}
