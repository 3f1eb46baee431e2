use std::collections::HashMap;

use expertrank_core::corpus::{self, DocId, Document, StopWordSet, Token};
use expertrank_core::feedback::{updated_weight, EvaluationRequest};
use expertrank_core::ranker::{RetrievalMode, SectionFlags};
use expertrank_core::store::replay_vocabulary;
use expertrank_core::{Corpus, Engine, Settings};
use expertrank_testkit::{
    brute_force_position, brute_force_rank, brute_force_shared_words, fixtures_dir, rng, token,
};
use rand::Rng;

fn doc(id: u64, folder: &str, name: &str, body: &str) -> Document {
    Document {
        doc_id: DocId(id),
        folder_name: folder.into(),
        doc_name: name.into(),
        body: body.into(),
    }
}

/// Five documents, a two-word query and an evaluation of the third result;
/// the reported delta must match a re-rank computed from raw text.
#[test]
fn scripted_five_doc_replay() {
    let docs = vec![
        doc(
            1,
            "Budget",
            "Budget Planning",
            "budget budget planning and forecast",
        ),
        doc(2, "Budget", "Annual Budget", "annual budget review"),
        doc(
            3,
            "Audit",
            "Internal Audit",
            "planning the internal audit and its planning cycle",
        ),
        doc(4, "Audit", "External Audit", "external audit planning"),
        doc(5, "Misc", "Memo", "office memo"),
    ];
    let engine = Engine::in_memory(
        Corpus::new(docs.clone()).unwrap(),
        StopWordSet::new(),
        Settings::default(),
    )
    .unwrap();
    let words = vec![token("budget"), token("planning")];
    let out = engine
        .search("budget planning", SectionFlags::all(), None, "u")
        .unwrap();

    let settings = Settings::default();
    let before = brute_force_rank(
        &docs,
        &words,
        &SectionFlags::all(),
        RetrievalMode::Union,
        &settings.section_weights,
        &HashMap::new(),
    );
    let third = before[2].0;
    assert_eq!(out.results[2].doc_id, third);

    let rec = engine
        .evaluate(&EvaluationRequest {
            query_id: out.query_id,
            doc_id: third,
            position: 3,
            user_id: "u".into(),
        })
        .unwrap();

    let shared = brute_force_shared_words(&docs[third.0 as usize - 1], &words);
    let vocab: HashMap<Token, f64> = shared
        .iter()
        .map(|w| (w.clone(), 1.0 + 3f64.sqrt()))
        .collect();
    let after = brute_force_rank(
        &docs,
        &words,
        &SectionFlags::all(),
        RetrievalMode::Union,
        &settings.section_weights,
        &vocab,
    );
    let p_after = brute_force_position(&after, third).unwrap();
    assert_eq!(rec.p_after, p_after);
    assert_eq!(rec.delta, p_after as i64 - 3);
}

#[test]
fn fixture_corpus_evaluation() {
    let corpus = corpus::ingest(&fixtures_dir().join("corpus.jsonl")).unwrap();
    let stop = StopWordSet::load(&fixtures_dir().join("stopwords.txt")).unwrap();
    let engine = Engine::in_memory(corpus, stop, Settings::default()).unwrap();
    let out = engine
        .search("tax code", SectionFlags::all(), None, "u")
        .unwrap();
    let ids: Vec<u64> = out.results.iter().map(|r| r.doc_id.0).collect();
    assert_eq!(ids, [1, 2, 3, 4]);
    let scores: Vec<f64> = out.results.iter().map(|r| r.score).collect();
    assert_eq!(scores, [38.0, 26.0, 11.0, 10.0]);
    let rec = engine
        .evaluate(&EvaluationRequest {
            query_id: out.query_id,
            doc_id: DocId(3),
            position: 3,
            user_id: "u".into(),
        })
        .unwrap();
    assert_eq!((rec.p_after, rec.delta), (2, -1));
}

/// Random sessions: every recorded weight change follows the update rule,
/// and replaying the log reproduces the vocabulary bit for bit.
#[test]
fn random_sessions_replay_exactly() {
    let mut rng = rng(99);
    for _ in 0..20 {
        let docs = expertrank_testkit::random_corpus(&mut rng, 30, 20);
        let mut settings = Settings::default();
        settings.alpha = rng.random_range(0.1..3.0);
        settings.users = settings.users.with_user("b", rng.random_range(0.5..4.0));
        let engine =
            Engine::in_memory(Corpus::new(docs).unwrap(), StopWordSet::new(), settings).unwrap();
        for _ in 0..15 {
            let words = expertrank_testkit::random_words(&mut rng, 20, 2, 4);
            let text = words
                .iter()
                .map(Token::as_str)
                .collect::<Vec<_>>()
                .join(" ");
            let user = if rng.random_bool(0.5) { "a" } else { "b" };
            let out = engine
                .search(&text, SectionFlags::all(), None, user)
                .unwrap();
            if out.results.is_empty() || !out.eligible_for_evaluation {
                continue;
            }
            let pick = rng.random_range(0..out.results.len());
            let r = out.results[pick];
            let rec = engine
                .evaluate(&EvaluationRequest {
                    query_id: out.query_id,
                    doc_id: r.doc_id,
                    position: r.position,
                    user_id: user.into(),
                })
                .unwrap();
            for u in &rec.updated_words {
                assert_eq!(
                    u.new_weight,
                    updated_weight(u.old_weight, rec.alpha, rec.competence, rec.position).unwrap()
                );
                assert!(u.new_weight >= u.old_weight);
            }
        }
        engine.with_store(|s| {
            assert_eq!(replay_vocabulary(s.evaluations()), *s.vocabulary());
            assert_eq!(s.vocabulary().version(), s.evaluations().len() as u64);
        });
    }
}
