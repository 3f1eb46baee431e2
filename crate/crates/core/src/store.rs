//! Learned word weights, the query log and the evaluation log.
//!
//! On disk a store is a directory holding
//!
//! * `vocabulary.tsv`: `#version<TAB>n` header, then `word<TAB>weight` rows for
//!   every word whose weight differs from 1, sorted by word;
//! * `queries.jsonl` and `evaluations.jsonl`: append-only logs, one JSON
//!   record per line.
//!
//! The evaluation log is authoritative. If the vocabulary file lags behind it
//! (a crash between the two writes) the vocabulary is rebuilt by replay.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Token;
use crate::feedback::{updated_weight, EvaluationRecord};
use crate::ranker::{Query, RankedResult, RetrievalMode, SectionFlags, WordWeights};

pub const VOCABULARY_FILE: &str = "vocabulary.tsv";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const EVALUATIONS_FILE: &str = "evaluations.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvaluationId(pub u64);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for EvaluationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}: store already initialized")]
    AlreadyInitialized(PathBuf),
    #[error("evaluation references unknown query {0}")]
    UnknownQuery(QueryId),
}

/// Word → weight, with every absent word weighing 1.
///
/// The map sits behind an [`Arc`] so snapshots are cheap and stay frozen
/// while the vocabulary is updated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightVocabulary {
    version: u64,
    weights: Arc<HashMap<Token, f64>>,
}

impl WeightVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, word: &Token) -> f64 {
        self.weights.get(word).copied().unwrap_or(1.0)
    }

    /// Words with a non-default weight.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Token, f64)> {
        self.weights.iter().map(|(k, v)| (k, *v))
    }

    /// Applies one evaluation's weight changes and bumps the version by one.
    pub fn apply<'a>(&mut self, updates: impl IntoIterator<Item = (&'a Token, f64)>) {
        let weights = Arc::make_mut(&mut self.weights);
        for (word, weight) in updates {
            if weight == 1.0 {
                weights.remove(word);
            } else {
                weights.insert(word.clone(), weight);
            }
        }
        self.version += 1;
    }

    pub fn snapshot(&self) -> VocabularySnapshot {
        VocabularySnapshot {
            version: self.version,
            weights: Arc::clone(&self.weights),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<_> = self.weights.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = format!("#version\t{}\n", self.version);
        for (word, weight) in rows {
            // `Display` for f64 prints the shortest string that parses back
            // to the same value.
            out.push_str(&format!("{word}\t{weight}\n"));
        }
        out
    }

    pub fn from_tsv(text: &str, path: &Path) -> Result<Self, StoreError> {
        let corrupt = |line: usize, reason: String| StoreError::Corrupt {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let version = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#version\t")
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| corrupt(1, format!("bad header {header:?}")))?,
            None => return Err(corrupt(1, "missing version header".into())),
        };
        let mut weights = HashMap::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (word, weight) = line
                .split_once('\t')
                .ok_or_else(|| corrupt(i + 1, "expected word<TAB>weight".into()))?;
            let token = Token::parse(word)
                .filter(|t| t.as_str() == word)
                .ok_or_else(|| corrupt(i + 1, format!("not a normalized word: {word:?}")))?;
            let weight: f64 = weight
                .parse()
                .ok()
                .filter(|w: &f64| w.is_finite() && *w > 0.0)
                .ok_or_else(|| corrupt(i + 1, format!("bad weight {weight:?}")))?;
            if weights.insert(token, weight).is_some() {
                return Err(corrupt(i + 1, format!("duplicate word {word:?}")));
            }
        }
        Ok(Self {
            version,
            weights: Arc::new(weights),
        })
    }
}

impl WordWeights for WeightVocabulary {
    fn weight(&self, word: &Token) -> f64 {
        self.get(word)
    }
}

/// Read-only view of the vocabulary at one version.
#[derive(Debug, Clone)]
pub struct VocabularySnapshot {
    version: u64,
    weights: Arc<HashMap<Token, f64>>,
}

impl VocabularySnapshot {
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn get(&self, word: &Token) -> f64 {
        self.weights.get(word).copied().unwrap_or(1.0)
    }
}

impl WordWeights for VocabularySnapshot {
    fn weight(&self, word: &Token) -> f64 {
        self.get(word)
    }
}

/// Rebuilds the vocabulary from the all-ones state by re-applying every
/// evaluation in order.
pub fn replay_vocabulary(records: &[EvaluationRecord]) -> WeightVocabulary {
    let mut vocab = WeightVocabulary::new();
    for record in records {
        let updates: Vec<(Token, f64)> = record
            .updated_words
            .iter()
            .map(|u| {
                let w = updated_weight(
                    vocab.get(&u.word),
                    record.alpha,
                    record.competence,
                    record.position,
                )
                .expect("logged positions are at least 1");
                (u.word.clone(), w)
            })
            .collect();
        vocab.apply(updates.iter().map(|(t, w)| (t, *w)));
    }
    vocab
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    /// Assigned by [`Store::log_query`].
    pub query_id: QueryId,
    pub text: String,
    pub words: Vec<Token>,
    pub flags: SectionFlags,
    pub mode: RetrievalMode,
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    /// Vocabulary version the results were ranked against.
    pub vocab_version: u64,
    pub results: Vec<RankedResult>,
}

impl QueryLogEntry {
    pub fn query(&self) -> Query {
        Query::new(self.words.iter().cloned(), self.flags, self.mode)
    }
}

/// The mutable half of the system. Persistent when opened on a directory.
#[derive(Debug, Default)]
pub struct Store {
    dir: Option<PathBuf>,
    vocab: WeightVocabulary,
    queries: Vec<QueryLogEntry>,
    evaluations: Vec<EvaluationRecord>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn is_initialized(dir: &Path) -> bool {
        dir.join(VOCABULARY_FILE).is_file()
    }

    /// Initializes an empty store under `dir`, creating the directory.
    pub fn create(dir: &Path) -> Result<Self, StoreError> {
        if Self::is_initialized(dir) {
            return Err(StoreError::AlreadyInitialized(dir.to_path_buf()));
        }
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let store = Self {
            dir: Some(dir.to_path_buf()),
            ..Self::default()
        };
        store.save(dir)?;
        Ok(store)
    }

    /// Opens an existing store. Missing files are an error.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        let mut store = Self::load(dir)?;
        store.dir = Some(dir.to_path_buf());
        if store.vocab.version() != store.evaluations.len() as u64 {
            store.vocab = replay_vocabulary(&store.evaluations);
            write_atomic(&dir.join(VOCABULARY_FILE), store.vocab.to_tsv().as_bytes())?;
        }
        Ok(store)
    }

    /// Reads a detached copy of the state saved under `dir`.
    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let vocab_path = dir.join(VOCABULARY_FILE);
        let text = fs::read_to_string(&vocab_path).map_err(io_err(&vocab_path))?;
        let vocab = WeightVocabulary::from_tsv(&text, &vocab_path)?;
        let queries: Vec<QueryLogEntry> = read_jsonl(&dir.join(QUERIES_FILE))?;
        let evaluations: Vec<EvaluationRecord> = read_jsonl(&dir.join(EVALUATIONS_FILE))?;
        check_monotonic(
            queries.iter().map(|q| q.query_id.0),
            &dir.join(QUERIES_FILE),
        )?;
        check_monotonic(
            evaluations.iter().map(|e| e.evaluation_id.0),
            &dir.join(EVALUATIONS_FILE),
        )?;
        Ok(Self {
            dir: None,
            vocab,
            queries,
            evaluations,
        })
    }

    /// Writes the complete state under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_atomic(&dir.join(VOCABULARY_FILE), self.vocab.to_tsv().as_bytes())?;
        write_atomic(&dir.join(QUERIES_FILE), &to_jsonl(&self.queries))?;
        write_atomic(&dir.join(EVALUATIONS_FILE), &to_jsonl(&self.evaluations))?;
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn vocabulary(&self) -> &WeightVocabulary {
        &self.vocab
    }

    pub fn snapshot(&self) -> VocabularySnapshot {
        self.vocab.snapshot()
    }

    pub fn queries(&self) -> &[QueryLogEntry] {
        &self.queries
    }

    pub fn query(&self, id: QueryId) -> Option<&QueryLogEntry> {
        // IDs are dense from 1
        let i = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.queries.get(i).filter(|q| q.query_id == id)
    }

    pub fn evaluations(&self) -> &[EvaluationRecord] {
        &self.evaluations
    }

    pub fn next_query_id(&self) -> QueryId {
        QueryId(self.queries.len() as u64 + 1)
    }

    pub fn next_evaluation_id(&self) -> EvaluationId {
        EvaluationId(self.evaluations.len() as u64 + 1)
    }

    /// Appends a query, assigning its ID.
    pub fn log_query(&mut self, mut entry: QueryLogEntry) -> Result<QueryId, StoreError> {
        entry.query_id = self.next_query_id();
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join(QUERIES_FILE), &entry)?;
        }
        let id = entry.query_id;
        self.queries.push(entry);
        Ok(id)
    }

    /// Appends an evaluation, assigning its ID, and installs the vocabulary
    /// it produced. The vocabulary must be exactly one version ahead.
    pub fn log_evaluation(
        &mut self,
        mut record: EvaluationRecord,
        vocab: WeightVocabulary,
    ) -> Result<EvaluationId, StoreError> {
        if self.query(record.query_id).is_none() {
            return Err(StoreError::UnknownQuery(record.query_id));
        }
        assert_eq!(
            vocab.version(),
            self.vocab.version() + 1,
            "one version per evaluation"
        );
        record.evaluation_id = self.next_evaluation_id();
        if let Some(dir) = &self.dir {
            append_jsonl(&dir.join(EVALUATIONS_FILE), &record)?;
            write_atomic(&dir.join(VOCABULARY_FILE), vocab.to_tsv().as_bytes())?;
        }
        let id = record.evaluation_id;
        self.evaluations.push(record);
        self.vocab = vocab;
        Ok(id)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("log records serialize");
        out.push(b'\n');
    }
    out
}

fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<(), StoreError> {
    let mut line = serde_json::to_vec(item).expect("log records serialize");
    line.push(b'\n');
    let mut file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    file.write_all(&line).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(items)
}

fn check_monotonic(ids: impl Iterator<Item = u64>, path: &Path) -> Result<(), StoreError> {
    for (i, id) in ids.enumerate() {
        if id != i as u64 + 1 {
            return Err(StoreError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected id {}, found {id}", i + 1),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DocId;
    use crate::feedback::WordUpdate;
    use proptest::prelude::*;

    fn t(w: &str) -> Token {
        Token::parse(w).unwrap()
    }

    fn entry(text: &str) -> QueryLogEntry {
        QueryLogEntry {
            query_id: QueryId(0),
            text: text.into(),
            words: crate::corpus::tokenize(text),
            flags: SectionFlags::all(),
            mode: RetrievalMode::Union,
            user_id: "u".into(),
            timestamp: Utc::now(),
            vocab_version: 0,
            results: vec![RankedResult {
                doc_id: DocId(1),
                score: 2.5,
                position: 1,
            }],
        }
    }

    fn record(query_id: u64, word: &str, old: f64, position: usize) -> (EvaluationRecord, f64) {
        let new = updated_weight(old, 1.0, 1.0, position).unwrap();
        let rec = EvaluationRecord {
            evaluation_id: EvaluationId(0),
            query_id: QueryId(query_id),
            doc_id: DocId(1),
            position,
            user_id: "u".into(),
            competence: 1.0,
            alpha: 1.0,
            updated_words: vec![WordUpdate {
                word: t(word),
                old_weight: old,
                new_weight: new,
            }],
            p_before: position,
            p_after: 1,
            delta: 1 - position as i64,
            timestamp: Utc::now(),
        };
        (rec, new)
    }

    #[test]
    fn snapshot_is_frozen() {
        let mut vocab = WeightVocabulary::new();
        let before = vocab.snapshot();
        vocab.apply([(&t("tax"), 2.0)]);
        assert_eq!(before.get(&t("tax")), 1.0);
        assert_eq!(before.version(), 0);
        assert_eq!(vocab.get(&t("tax")), 2.0);
        assert_eq!(vocab.snapshot().get(&t("tax")), 2.0);
        assert_eq!(vocab.version(), 1);
    }

    #[test]
    fn snapshots_without_update_agree() {
        let mut vocab = WeightVocabulary::new();
        vocab.apply([(&t("tax"), 3.5)]);
        let (a, b) = (vocab.snapshot(), vocab.snapshot());
        for w in ["tax", "code", "никогда"] {
            assert_eq!(a.get(&t(w)), b.get(&t(w)));
        }
        assert_eq!(a.get(&t("never")), 1.0);
    }

    #[test]
    fn weights_of_one_are_not_stored() {
        let mut vocab = WeightVocabulary::new();
        vocab.apply([(&t("tax"), 1.0)]);
        assert!(vocab.is_empty());
        assert_eq!(vocab.to_tsv(), "#version\t1\n");
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let mut vocab = WeightVocabulary::new();
        vocab.apply([(&t("tax"), 2.0), (&t("кодекс"), 1.0 + 3f64.sqrt())]);
        let tsv = vocab.to_tsv();
        let p = Path::new("v.tsv");
        assert_eq!(WeightVocabulary::from_tsv(&tsv, p).unwrap(), vocab);
        assert!(WeightVocabulary::from_tsv("", p).is_err());
        assert!(WeightVocabulary::from_tsv("#version\tx\n", p).is_err());
        assert!(WeightVocabulary::from_tsv("#version\t1\ntax 2\n", p).is_err());
        assert!(WeightVocabulary::from_tsv("#version\t1\nTax\t2\n", p).is_err());
        assert!(WeightVocabulary::from_tsv("#version\t1\ntax\t-2\n", p).is_err());
        assert!(WeightVocabulary::from_tsv("#version\t1\ntax\t2\ntax\t3\n", p).is_err());
    }

    #[test]
    fn query_ids_start_at_one_and_survive_restart() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::create(dir.path()).unwrap();
        assert_eq!(store.log_query(entry("tax code")).unwrap(), QueryId(1));
        store.log_query(entry("b")).unwrap();
        store.log_query(entry("c")).unwrap();
        drop(store);
        let mut store = Store::open(dir.path()).unwrap();
        assert_eq!(store.queries().len(), 3);
        assert_eq!(store.query(QueryId(1)).unwrap().text, "tax code");
        assert_eq!(store.log_query(entry("d")).unwrap(), QueryId(4));
        assert!(Store::create(dir.path()).is_err());
    }

    #[test]
    fn evaluation_needs_known_query() {
        let mut store = Store::in_memory();
        let (rec, new) = record(1, "tax", 1.0, 4);
        let mut vocab = store.vocabulary().clone();
        vocab.apply([(&t("tax"), new)]);
        assert!(matches!(
            store.log_evaluation(rec, vocab),
            Err(StoreError::UnknownQuery(QueryId(1)))
        ));
        assert!(store.evaluations().is_empty());
    }

    #[test]
    fn missing_store_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Store::open(&dir.path().join("nope")),
            Err(StoreError::Io { .. })
        ));
    }

    #[test]
    fn corrupt_log_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::create(dir.path()).unwrap();
        store.log_query(entry("a")).unwrap();
        let path = dir.path().join(QUERIES_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        writeln!(f, "{{garbage").unwrap();
        match Store::open(dir.path()) {
            Err(StoreError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lagging_vocabulary_is_rebuilt_from_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::create(dir.path()).unwrap();
        store.log_query(entry("tax")).unwrap();
        let (rec, new) = record(1, "tax", 1.0, 4);
        let mut vocab = store.vocabulary().clone();
        vocab.apply([(&t("tax"), new)]);
        store.log_evaluation(rec, vocab).unwrap();
        // simulate a crash before the vocabulary write
        fs::write(dir.path().join(VOCABULARY_FILE), "#version\t0\n").unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.vocabulary().version(), 1);
        assert_eq!(store.vocabulary().get(&t("tax")), 3.0);
    }

    #[test]
    fn replay_reproduces_weights() {
        let mut store = Store::in_memory();
        store.log_query(entry("tax")).unwrap();
        let mut w = 1.0;
        for p in [4, 1, 9, 2] {
            let (rec, new) = record(1, "tax", w, p);
            let mut vocab = store.vocabulary().clone();
            vocab.apply([(&t("tax"), new)]);
            store.log_evaluation(rec, vocab).unwrap();
            w = new;
        }
        assert_eq!(replay_vocabulary(store.evaluations()), *store.vocabulary());
        assert_eq!(store.vocabulary().version(), 4);
    }

    proptest! {
        #[test]
        fn save_load_round_trip(
            weights in proptest::collection::hash_map("[a-zа-я]{1,8}", 1.0f64..1e6, 0..20),
            n_queries in 0usize..5,
        ) {
            let mut store = Store::in_memory();
            for i in 0..n_queries {
                store.log_query(entry(&format!("q{i} tax"))).unwrap();
            }
            let mut vocab = store.vocabulary().clone();
            let updates: Vec<(Token, f64)> = weights.iter().map(|(k, v)| (t(k), *v)).collect();
            vocab.apply(updates.iter().map(|(k, v)| (k, *v)));
            store.vocab = vocab;
            let dir = tempfile::tempdir().unwrap();
            store.save(dir.path()).unwrap();
            let loaded = Store::load(dir.path()).unwrap();
            prop_assert_eq!(loaded.vocabulary(), store.vocabulary());
            prop_assert_eq!(loaded.queries(), store.queries());
            prop_assert_eq!(loaded.next_query_id(), store.next_query_id());
        }
    }
}
