use std::collections::HashMap;

use expertrank_core::corpus::{DocId, Document, Section, Token};
use expertrank_core::index::InvertedIndex;
use expertrank_core::ranker::{self, Query, RetrievalMode, SectionFlags, SectionWeights};
use expertrank_testkit::{
    brute_force_rank, random_corpus, random_flags, random_section_weights, random_vocab,
    random_words, rng, token,
};
use proptest::prelude::*;

fn scores(results: &[ranker::RankedResult]) -> HashMap<DocId, f64> {
    results.iter().map(|r| (r.doc_id, r.score)).collect()
}

#[test]
fn ten_doc_corpus_matches_brute_force() {
    let mut rng = rng(10);
    let docs: Vec<Document> = random_corpus(&mut rng, 10, 15);
    let idx = InvertedIndex::build(&docs);
    let weights = SectionWeights::default();
    let vocab = HashMap::new();
    for _ in 0..50 {
        let words = random_words(&mut rng, 15, 2, 3);
        let query = Query::new(words.clone(), SectionFlags::all(), RetrievalMode::Union);
        let got = ranker::search(&idx, &query, &weights, &vocab).unwrap();
        let want = brute_force_rank(
            &docs,
            &words,
            &SectionFlags::all(),
            RetrievalMode::Union,
            &weights,
            &vocab,
        );
        let got: Vec<(DocId, f64)> = got.iter().map(|r| (r.doc_id, r.score)).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn positions_are_dense_and_scores_sorted() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let docs = random_corpus(&mut rng, 40, 30);
        let idx = InvertedIndex::build(&docs);
        let words = random_words(&mut rng, 30, 1, 4);
        let query = Query::new(words, random_flags(&mut rng), RetrievalMode::Union);
        let weights = random_section_weights(&mut rng);
        let res = ranker::search(&idx, &query, &weights, &random_vocab(&mut rng, 30)).unwrap();
        for (i, r) in res.iter().enumerate() {
            assert_eq!(r.position, i + 1);
            assert!(r.score > 0.0);
        }
        for pair in res.windows(2) {
            assert!(
                pair[0].score > pair[1].score
                    || (pair[0].score == pair[1].score && pair[0].doc_id < pair[1].doc_id)
            );
        }
    }
}

fn arb_case() -> impl Strategy<Value = u64> {
    any::<u64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_weight_never_lowers_a_score(seed in arb_case(), bump in 0.0f64..10.0) {
        let mut rng = rng(seed);
        let docs = random_corpus(&mut rng, 30, 25);
        let idx = InvertedIndex::build(&docs);
        let words = random_words(&mut rng, 25, 1, 4);
        let query = Query::new(words.clone(), random_flags(&mut rng), RetrievalMode::Union);
        let weights = random_section_weights(&mut rng);
        let vocab = random_vocab(&mut rng, 25);
        let mut raised = vocab.clone();
        let w = &words[0];
        raised.insert(w.clone(), vocab.get(w).copied().unwrap_or(1.0) + bump);
        for d in &docs {
            let before = ranker::doc_score(&idx, &query, d.doc_id, &weights, &vocab).unwrap();
            let after = ranker::doc_score(&idx, &query, d.doc_id, &weights, &raised).unwrap();
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn disabling_a_section_never_raises_a_score(seed in arb_case(), off in 0usize..3) {
        let mut rng = rng(seed);
        let docs = random_corpus(&mut rng, 30, 25);
        let idx = InvertedIndex::build(&docs);
        let words = random_words(&mut rng, 25, 1, 4);
        let full = Query::new(words.clone(), SectionFlags::all(), RetrievalMode::Union);
        let mut partial = full.clone();
        partial.flags.set(Section::ALL[off], false);
        let weights = random_section_weights(&mut rng);
        let vocab = random_vocab(&mut rng, 25);
        for d in &docs {
            let a = ranker::doc_score(&idx, &full, d.doc_id, &weights, &vocab).unwrap();
            let b = ranker::doc_score(&idx, &partial, d.doc_id, &weights, &vocab).unwrap();
            prop_assert!(b <= a);
        }
    }

    #[test]
    fn single_word_order_is_scale_invariant(seed in arb_case(), k in 0.001f64..1000.0) {
        let mut rng = rng(seed);
        let docs = random_corpus(&mut rng, 30, 20);
        let idx = InvertedIndex::build(&docs);
        let word: Token = random_words(&mut rng, 20, 1, 1).remove(0);
        let query = Query::new([word.clone()], random_flags(&mut rng), RetrievalMode::Union);
        let weights = random_section_weights(&mut rng);
        let base: HashMap<Token, f64> = [(word.clone(), rng_weight(seed))].into_iter().collect();
        let scaled: HashMap<Token, f64> = [(word.clone(), base[&word] * k)].into_iter().collect();
        let a = ranker::search(&idx, &query, &weights, &base).unwrap();
        let b = ranker::search(&idx, &query, &weights, &scaled).unwrap();
        let order = |r: &[ranker::RankedResult]| r.iter().map(|x| x.doc_id).collect::<Vec<_>>();
        prop_assert_eq!(order(&a), order(&b));
        let (sa, sb) = (scores(&a), scores(&b));
        for (d, s) in sa {
            prop_assert!((sb[&d] - s * k).abs() <= 1e-9 * (s * k).max(1.0));
        }
    }
}

fn rng_weight(seed: u64) -> f64 {
    1.0 + (seed % 97) as f64 / 10.0
}

#[test]
fn intersection_matches_brute_force_with_disabled_sections() {
    let mut rng = rng(12);
    for _ in 0..100 {
        let docs = random_corpus(&mut rng, 25, 12);
        let idx = InvertedIndex::build(&docs);
        let words = random_words(&mut rng, 12, 2, 3);
        let flags = random_flags(&mut rng);
        let weights = random_section_weights(&mut rng);
        let vocab = random_vocab(&mut rng, 12);
        let query = Query::new(words.clone(), flags, RetrievalMode::Intersection);
        let got: Vec<(DocId, f64)> = ranker::search(&idx, &query, &weights, &vocab)
            .unwrap()
            .iter()
            .map(|r| (r.doc_id, r.score))
            .collect();
        assert_eq!(
            got,
            brute_force_rank(
                &docs,
                &words,
                &flags,
                RetrievalMode::Intersection,
                &weights,
                &vocab
            )
        );
    }
}

#[test]
fn duplicate_query_words_count_once() {
    let docs = vec![Document {
        doc_id: DocId(1),
        folder_name: String::new(),
        doc_name: "x".into(),
        body: "tax code".into(),
    }];
    let idx = InvertedIndex::build(&docs);
    let q = Query::new(
        [token("tax"), token("tax"), token("code")],
        SectionFlags::all(),
        RetrievalMode::Union,
    );
    let res = ranker::search(&idx, &q, &SectionWeights::default(), &HashMap::new()).unwrap();
    assert_eq!(res[0].score, 2.0);
}
