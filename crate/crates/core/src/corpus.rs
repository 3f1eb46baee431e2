//! Documents, tokenization, stop-words and corpus ingestion.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable document identifier, always positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub u64);

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A normalized word: a non-empty run of lower-case letters and digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Normalizes `word` and returns it as a single token, or `None` when the
    /// text does not normalize to exactly one token.
    pub fn parse(word: &str) -> Option<Token> {
        let mut tokens = tokenize(word);
        if tokens.len() == 1 {
            tokens.pop()
        } else {
            None
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// The three searchable parts of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Folder,
    Name,
    Body,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Folder, Section::Name, Section::Body];

    pub fn index(self) -> usize {
        match self {
            Section::Folder => 0,
            Section::Name => 1,
            Section::Body => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Folder => "folder",
            Section::Name => "name",
            Section::Body => "body",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Section {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "folder" => Ok(Section::Folder),
            "name" => Ok(Section::Name),
            "body" => Ok(Section::Body),
            other => Err(format!(
                "unknown section '{other}' (expected folder, name or body)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: DocId,
    #[serde(rename = "folder")]
    pub folder_name: String,
    #[serde(rename = "name")]
    pub doc_name: String,
    pub body: String,
}

impl Document {
    pub fn section_text(&self, section: Section) -> &str {
        match section {
            Section::Folder => &self.folder_name,
            Section::Name => &self.doc_name,
            Section::Body => &self.body,
        }
    }
}

/// Splits `text` into maximal runs of Unicode letters and digits, lower-cased.
///
/// Characters whose lower-case mapping is not alphanumeric (for example the
/// combining dot produced by `İ`) are dropped so that every token is a fixed
/// point of normalization.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase().filter(|c| c.is_alphanumeric()));
        } else if !current.is_empty() {
            tokens.push(Token(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(Token(current));
    }
    tokens
}

/// Words removed from queries before ranking. Never applied to documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopWordSet {
    words: HashSet<Token>,
}

impl StopWordSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts every token `word` normalizes to.
    pub fn insert(&mut self, word: &str) {
        self.words.extend(tokenize(word));
    }

    pub fn contains(&self, token: &Token) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Parses the one-word-per-line format. Blank lines and lines starting
    /// with `#` are skipped.
    pub fn parse(text: &str) -> Self {
        let mut set = Self::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            set.insert(line);
        }
        set
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&text))
    }

    /// Serializes in the same line format, sorted.
    pub fn to_text(&self) -> String {
        let sorted: BTreeSet<&str> = self.words.iter().map(Token::as_str).collect();
        let mut out = String::new();
        for word in sorted {
            out.push_str(word);
            out.push('\n');
        }
        out
    }
}

impl<S: AsRef<str>> FromIterator<S> for StopWordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = Self::new();
        for word in iter {
            set.insert(word.as_ref());
        }
        set
    }
}

pub fn filter_stopwords(tokens: &[Token], stopwords: &StopWordSet) -> Vec<Token> {
    tokens
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect()
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: duplicate doc_id {doc_id}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        doc_id: DocId,
    },
    #[error("{path}: file is not valid UTF-8")]
    NotUtf8 { path: PathBuf },
    #[error("duplicate doc_id {0}")]
    DuplicateDocument(DocId),
    #[error("document {0} has an empty name")]
    EmptyName(DocId),
    #[error("doc_id must be positive")]
    ZeroId,
}

/// An immutable collection of documents with unique IDs, kept sorted by ID.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(mut docs: Vec<Document>) -> Result<Self, CorpusError> {
        docs.sort_by_key(|d| d.doc_id);
        for pair in docs.windows(2) {
            if pair[0].doc_id == pair[1].doc_id {
                return Err(CorpusError::DuplicateDocument(pair[0].doc_id));
            }
        }
        for doc in &docs {
            if doc.doc_id.0 == 0 {
                return Err(CorpusError::ZeroId);
            }
            if doc.doc_name.trim().is_empty() {
                return Err(CorpusError::EmptyName(doc.doc_id));
            }
        }
        Ok(Self { docs })
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, doc_id: DocId) -> Option<&Document> {
        self.docs
            .binary_search_by_key(&doc_id, |d| d.doc_id)
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.docs
            .iter()
            .flat_map(|d| Section::ALL.map(|s| tokenize(d.section_text(s)).len()))
            .sum()
    }

    /// Writes the corpus as JSON Lines with explicit IDs.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for doc in &self.docs {
            let line = serde_json::to_string(doc).expect("document serializes");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    doc_id: Option<u64>,
    #[serde(default)]
    folder: String,
    name: Option<String>,
    #[serde(default)]
    body: String,
}

/// Reads a corpus from a JSON Lines file or a directory tree.
pub fn ingest(source: &Path) -> Result<Corpus, CorpusError> {
    if source.is_dir() {
        ingest_dir(source)
    } else {
        ingest_jsonl(source)
    }
}

/// One document per non-blank line. Records without `doc_id` are numbered
/// from 1 upwards in line order, skipping IDs claimed explicitly anywhere in
/// the file.
pub fn ingest_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line: usize, reason: String| CorpusError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        let name = match record.name {
            Some(name) if !name.trim().is_empty() => name,
            Some(_) => return Err(malformed(line_no, "empty document name".into())),
            None => return Err(malformed(line_no, "missing field `name`".into())),
        };
        if record.doc_id == Some(0) {
            return Err(malformed(line_no, "doc_id must be positive".into()));
        }
        records.push((line_no, record.doc_id, record.folder, name, record.body));
    }

    let mut explicit = HashSet::new();
    for (line, doc_id, ..) in &records {
        if let Some(id) = doc_id {
            if !explicit.insert(*id) {
                return Err(CorpusError::DuplicateId {
                    path: path.to_path_buf(),
                    line: *line,
                    doc_id: DocId(*id),
                });
            }
        }
    }

    let mut next = 1u64;
    let docs = records
        .into_iter()
        .map(|(_, doc_id, folder_name, doc_name, body)| {
            let doc_id = doc_id.unwrap_or_else(|| {
                while explicit.contains(&next) {
                    next += 1;
                }
                next += 1;
                next - 1
            });
            Document {
                doc_id: DocId(doc_id),
                folder_name,
                doc_name,
                body,
            }
        })
        .collect();
    Corpus::new(docs)
}

/// Every regular file under `root` becomes a document. Files are visited in
/// path order and numbered from 1. The folder name is the file's parent
/// directory name (empty for files directly under `root`), the document name
/// is the file stem.
pub fn ingest_dir(root: &Path) -> Result<Corpus, CorpusError> {
    let mut docs = Vec::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name();
    for entry in walker {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            CorpusError::Io {
                path,
                source: e.into(),
            }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let bytes = fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let body = String::from_utf8(bytes).map_err(|_| CorpusError::NotUtf8 {
            path: path.to_path_buf(),
        })?;
        let folder_name = if entry.depth() > 1 {
            path.parent()
                .and_then(Path::file_name)
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        } else {
            String::new()
        };
        let doc_name = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        docs.push(Document {
            doc_id: DocId(docs.len() as u64 + 1),
            folder_name,
            doc_name,
            body,
        });
    }
    Corpus::new(docs)
}
