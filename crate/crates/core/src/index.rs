//! Per-section inverted index with raw occurrence counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, DocId, Document, Section, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: DocId,
    pub count: u32,
}

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt index snapshot: {source}")]
    Corrupt {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Immutable after [`InvertedIndex::build`]. Postings lists are sorted by
/// document ID.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    sections: [HashMap<Token, Vec<Posting>>; 3],
    doc_words: BTreeMap<DocId, BTreeSet<Token>>,
}

impl InvertedIndex {
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut index = Self::default();
        let mut docs: Vec<&Document> = docs.into_iter().collect();
        docs.sort_by_key(|d| d.doc_id);
        for doc in docs {
            let mut words = BTreeSet::new();
            for section in Section::ALL {
                let mut counts: HashMap<Token, u32> = HashMap::new();
                for token in tokenize(doc.section_text(section)) {
                    *counts.entry(token).or_default() += 1;
                }
                let postings = &mut index.sections[section.index()];
                for (token, count) in counts {
                    postings.entry(token.clone()).or_default().push(Posting {
                        doc_id: doc.doc_id,
                        count,
                    });
                    words.insert(token);
                }
            }
            index.doc_words.insert(doc.doc_id, words);
        }
        index
    }

    pub fn contains(&self, doc_id: DocId) -> bool {
        self.doc_words.contains_key(&doc_id)
    }

    pub fn document_count(&self) -> usize {
        self.doc_words.len()
    }

    pub fn postings(&self, section: Section, word: &Token) -> &[Posting] {
        self.sections[section.index()]
            .get(word)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Number of times `word` occurs in `section` of document `doc_id`.
    pub fn occurrences(
        &self,
        word: &Token,
        doc_id: DocId,
        section: Section,
    ) -> Result<u32, IndexError> {
        if !self.contains(doc_id) {
            return Err(IndexError::UnknownDocument(doc_id));
        }
        let postings = self.postings(section, word);
        Ok(postings
            .binary_search_by_key(&doc_id, |p| p.doc_id)
            .map(|i| postings[i].count)
            .unwrap_or(0))
    }

    /// All distinct tokens of the document, over every section.
    pub fn document_words(&self, doc_id: DocId) -> Result<&BTreeSet<Token>, IndexError> {
        self.doc_words
            .get(&doc_id)
            .ok_or(IndexError::UnknownDocument(doc_id))
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let json = serde_json::to_vec(self).expect("index serializes");
        fs::write(path, json).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|source| IndexError::Corrupt {
            path: path.to_path_buf(),
            source,
        })
    }
}
