//! Test support: brute-force reference rankers and seeded corpus generators.
//!
//! The oracles here never touch the inverted index. They rescan raw document
//! text for every (word, document, section) triple.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use expertrank_core::corpus::{tokenize, DocId, Document, Section, Token};
use expertrank_core::ranker::{RetrievalMode, SectionFlags, SectionWeights};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn token(word: &str) -> Token {
    Token::parse(word).expect("a single word")
}

fn raw_count(doc: &Document, section: Section, word: &Token) -> usize {
    tokenize(doc.section_text(section))
        .iter()
        .filter(|t| *t == word)
        .count()
}

/// Sum of `w(q) * sum_i c_i * s_i * N_i(q, d)`, accumulated sections-then-words
/// in the same order as the engine.
pub fn brute_force_score(
    doc: &Document,
    words: &[Token],
    flags: &SectionFlags,
    weights: &SectionWeights,
    vocab: &HashMap<Token, f64>,
) -> f64 {
    let mut total = 0.0;
    for word in words {
        let mut per_word = 0.0;
        for section in Section::ALL {
            if flags.enabled(section) {
                per_word += weights.get(section) * raw_count(doc, section, word) as f64;
            }
        }
        total += vocab.get(word).copied().unwrap_or(1.0) * per_word;
    }
    total
}

/// Scores every document directly, keeps the positive ones (and, in
/// intersection mode, only documents containing every word in an enabled
/// section) and sorts by score descending then ID ascending.
pub fn brute_force_rank(
    docs: &[Document],
    words: &[Token],
    flags: &SectionFlags,
    mode: RetrievalMode,
    weights: &SectionWeights,
    vocab: &HashMap<Token, f64>,
) -> Vec<(DocId, f64)> {
    let mut distinct = Vec::new();
    let mut seen = BTreeSet::new();
    for w in words {
        if seen.insert(w.clone()) {
            distinct.push(w.clone());
        }
    }
    let mut ranked: Vec<(DocId, f64)> = docs
        .iter()
        .filter(|d| {
            mode == RetrievalMode::Union
                || distinct.iter().all(|w| {
                    Section::ALL
                        .iter()
                        .any(|s| flags.enabled(*s) && raw_count(d, *s, w) > 0)
                })
        })
        .map(|d| {
            (
                d.doc_id,
                brute_force_score(d, &distinct, flags, weights, vocab),
            )
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked
}

pub fn brute_force_position(ranked: &[(DocId, f64)], doc_id: DocId) -> Option<usize> {
    ranked.iter().position(|(d, _)| *d == doc_id).map(|i| i + 1)
}

/// Query words contained anywhere in the document, from raw text.
pub fn brute_force_shared_words(doc: &Document, words: &[Token]) -> BTreeSet<Token> {
    let all: BTreeSet<Token> = Section::ALL
        .iter()
        .flat_map(|s| tokenize(doc.section_text(*s)))
        .collect();
    words.iter().filter(|w| all.contains(*w)).cloned().collect()
}

/// A random corpus over a vocabulary of `w0 .. w{vocab-1}`.
pub fn random_corpus(rng: &mut StdRng, max_docs: usize, vocab: usize) -> Vec<Document> {
    let n = rng.random_range(1..=max_docs);
    let text = |rng: &mut StdRng, max: usize| -> String {
        let len = rng.random_range(0..=max);
        (0..len)
            .map(|_| format!("w{}", rng.random_range(0..vocab)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (0..n)
        .map(|i| Document {
            doc_id: DocId(i as u64 + 1),
            folder_name: text(rng, 2),
            doc_name: format!("doc{} {}", i + 1, text(rng, 4)),
            body: text(rng, 40),
        })
        .collect()
}

pub fn random_words(rng: &mut StdRng, vocab: usize, min: usize, max: usize) -> Vec<Token> {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| token(&format!("w{}", rng.random_range(0..vocab))))
        .collect()
}

pub fn random_section_weights(rng: &mut StdRng) -> SectionWeights {
    loop {
        let mut pick = || {
            if rng.random_bool(0.15) {
                0.0
            } else if rng.random_bool(0.5) {
                f64::from(rng.random_range(1u32..=20))
            } else {
                rng.random_range(0.01..20.0)
            }
        };
        if let Ok(w) = SectionWeights::new(pick(), pick(), pick()) {
            return w;
        }
    }
}

pub fn random_flags(rng: &mut StdRng) -> SectionFlags {
    loop {
        let flags = SectionFlags {
            folder: rng.random_bool(0.7),
            name: rng.random_bool(0.7),
            body: rng.random_bool(0.7),
        };
        if flags.any() {
            return flags;
        }
    }
}

pub fn random_vocab(rng: &mut StdRng, vocab: usize) -> HashMap<Token, f64> {
    let mut weights = HashMap::new();
    for i in 0..vocab {
        if !rng.random_bool(0.3) {
            continue;
        }
        let w = if rng.random_bool(0.5) {
            1.0 + f64::from(rng.random_range(0u32..5))
        } else {
            rng.random_range(1.0..10.0)
        };
        weights.insert(token(&format!("w{i}")), w);
    }
    weights
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A corpus of documents planted on topics, with the topic of each document.
#[derive(Debug, Clone)]
pub struct TopicCorpus {
    pub docs: Vec<Document>,
    pub topic_of: HashMap<DocId, usize>,
    /// Query text per scripted search, with the topic it asks about.
    pub queries: Vec<(String, usize)>,
}

/// Builds `topics * docs_per_topic` documents. Each topic owns a few
/// distinctive terms; a pool of shared terms is sprinkled across all topics,
/// and off-topic documents often carry a shared term in their name, where it
/// weighs heavily. Queries pair a distinctive term with one or two shared
/// terms, so the initial ranking is polluted by off-topic documents that
/// match the shared terms strongly.
pub fn planted_topics(
    seed: u64,
    topics: usize,
    docs_per_topic: usize,
    queries: usize,
) -> TopicCorpus {
    let mut rng = rng(seed);
    const SHARED: usize = 8;
    const OWN: usize = 4;
    let shared = |i: usize| format!("common{i}");
    let own = |t: usize, i: usize| format!("topic{t}term{i}");

    let mut docs = Vec::new();
    let mut topic_of = HashMap::new();
    for t in 0..topics {
        for _ in 0..docs_per_topic {
            let id = DocId(docs.len() as u64 + 1);
            let mut name = vec![own(t, rng.random_range(0..OWN))];
            if rng.random_bool(0.6) {
                name.push(shared(rng.random_range(0..SHARED)));
            }
            let mut body = Vec::new();
            for _ in 0..rng.random_range(3..8) {
                body.push(own(t, rng.random_range(0..OWN)));
            }
            for _ in 0..rng.random_range(2..10) {
                body.push(shared(rng.random_range(0..SHARED)));
            }
            for _ in 0..rng.random_range(5..15) {
                body.push(format!("filler{}", rng.random_range(0..200)));
            }
            body.shuffle(&mut rng);
            docs.push(Document {
                doc_id: id,
                folder_name: format!("section{t}"),
                doc_name: name.join(" "),
                body: body.join(" "),
            });
            topic_of.insert(id, t);
        }
    }

    let topic_ids: Vec<usize> = (0..topics).collect();
    let queries = (0..queries)
        .map(|_| {
            let t = *topic_ids.choose(&mut rng).unwrap();
            let mut words = vec![own(t, rng.random_range(0..OWN))];
            let extra = rng.random_range(1..=2);
            while words.len() < 1 + extra {
                let w = shared(rng.random_range(0..SHARED));
                if !words.contains(&w) {
                    words.push(w);
                }
            }
            words.shuffle(&mut rng);
            (words.join(" "), t)
        })
        .collect();

    TopicCorpus {
        docs,
        topic_of,
        queries,
    }
}
