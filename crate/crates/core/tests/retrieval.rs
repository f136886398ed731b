use std::collections::BTreeMap;

use ctrlbot_core::knowledge::Document;
use ctrlbot_core::nlu::Lemmatizer;
use ctrlbot_core::retrieval::{Index, RetrievalConfig, RetrievalMethod, EMBED_DIM};
use ctrlbot_testkit::corpora::{kb_with_docs, queries, synthetic_docs, three_docs};
use ctrlbot_testkit::fixture_kb;
use ctrlbot_testkit::oracle::{all_methods, compare_with_index};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn no_meta() -> BTreeMap<String, String> {
    BTreeMap::new()
}

#[test]
fn idf_of_chocolate_in_three_docs() {
    let kb = kb_with_docs(&fixture_kb(), three_docs());
    let lem = Lemmatizer::from_kb(&kb);
    let index = Index::build(kb.documents.values(), &lem);
    let idf = index.idf("chocolate").unwrap();
    assert!((idf - (3.0f64 / 2.0).ln()).abs() < 1e-12);
}

#[test]
fn semantic_reaches_synonyms_fulltext_does_not() {
    let kb = kb_with_docs(&fixture_kb(), three_docs());
    let lem = Lemmatizer::from_kb(&kb);
    let index = Index::build(kb.documents.values(), &lem);
    let full = index
        .search(&lem, &kb.ontology, "praline", &RetrievalConfig::new(RetrievalMethod::FullText, 3), &no_meta())
        .unwrap();
    let sem = index
        .search(&lem, &kb.ontology, "praline", &RetrievalConfig::new(RetrievalMethod::Semantic, 3), &no_meta())
        .unwrap();
    assert!(full.iter().all(|d| d.id.as_str() != "b"));
    assert!(sem.iter().any(|d| d.id.as_str() == "b" && d.score > 0.0));
}

#[test]
fn metadata_only_single_hit() {
    let kb = fixture_kb();
    let lem = Lemmatizer::from_kb(&kb);
    let index = Index::build(kb.documents.values(), &lem);
    let meta = BTreeMap::from([("category".to_string(), "pricing".to_string())]);
    let hits = index
        .search(&lem, &kb.ontology, "", &RetrievalConfig::new(RetrievalMethod::MetadataOnly, 5), &meta)
        .unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!(hits[0].id.as_str(), "doc-pricing");
    assert_eq!(hits[0].score, 1.0);
}

#[test]
fn oracle_agrees_on_three_docs() {
    let kb = kb_with_docs(&fixture_kb(), three_docs());
    let problems = compare_with_index(&kb, &queries(), &all_methods(3), TOL);
    assert!(problems.is_empty(), "{problems:#?}");
}

#[test]
fn oracle_agrees_on_fixture() {
    let problems = compare_with_index(&fixture_kb(), &queries(), &all_methods(5), TOL);
    assert!(problems.is_empty(), "{problems:#?}");
}

#[test]
fn oracle_agrees_on_synthetic_corpus() {
    let kb = kb_with_docs(&fixture_kb(), synthetic_docs(42, 50));
    let mut configs = all_methods(10);
    configs.push(RetrievalConfig::hybrid(0.2, 0.5, 0.3, 50));
    configs.push(RetrievalConfig::hybrid(0.0, 0.0, 1.0, 7));
    let problems = compare_with_index(&kb, &queries(), &configs, TOL);
    assert!(problems.is_empty(), "{problems:#?}");
}

fn corpus(seed: u64, n: usize) -> (ctrlbot_core::knowledge::KnowledgeBase, Lemmatizer) {
    let kb = kb_with_docs(&fixture_kb(), synthetic_docs(seed, n));
    let lem = Lemmatizer::from_kb(&kb);
    (kb, lem)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_corpora_match_oracle(seed in any::<u64>(), n in 0usize..=50, k in 1usize..8) {
        let kb = kb_with_docs(&fixture_kb(), synthetic_docs(seed, n));
        let problems = compare_with_index(&kb, &queries(), &all_methods(k), TOL);
        prop_assert!(problems.is_empty(), "{:#?}", problems);
    }

    #[test]
    fn k_results_are_a_prefix_of_k_plus_one(seed in any::<u64>(), k in 1usize..12, q in 0usize..20) {
        let (kb, lem) = corpus(seed, 30);
        let index = Index::build(kb.documents.values(), &lem);
        let (query, meta) = &queries()[q];
        for mut config in all_methods(k) {
            let a = index.search(&lem, &kb.ontology, query, &config, meta).unwrap();
            config.k = k + 1;
            let b = index.search(&lem, &kb.ontology, query, &config, meta).unwrap();
            prop_assert!(a.len() <= b.len());
            prop_assert_eq!(&a[..], &b[..a.len()]);
            for w in a.windows(2) {
                prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].id < w[1].id));
            }
            prop_assert!(a.iter().all(|d| d.score > 0.0 && d.score <= 1.0));
        }
    }

    #[test]
    fn semantic_recall_covers_fulltext(seed in any::<u64>(), q in 0usize..20) {
        let (kb, lem) = corpus(seed, 40);
        let index = Index::build(kb.documents.values(), &lem);
        let (query, meta) = &queries()[q];
        let full = index.search(&lem, &kb.ontology, query, &RetrievalConfig::new(RetrievalMethod::FullText, 50), meta).unwrap();
        let sem = index.search(&lem, &kb.ontology, query, &RetrievalConfig::new(RetrievalMethod::Semantic, 50), meta).unwrap();
        for d in &full {
            prop_assert!(sem.iter().any(|s| s.id == d.id), "{} lost", d.id);
        }
    }

    #[test]
    fn incremental_build_equals_batch(seed in any::<u64>(), n in 1usize..30, split in 0usize..30) {
        let (kb, lem) = corpus(seed, n);
        let docs: Vec<Document> = kb.documents.values().cloned().collect();
        let split = split.min(docs.len());
        let batch = Index::build(&docs, &lem);
        let mut inc = Index::build(&docs[..split], &lem);
        for d in &docs[split..] {
            inc.add_document(d, &lem);
        }
        prop_assert_eq!(&inc.postings, &batch.postings);
        prop_assert_eq!(&inc.vectors, &batch.vectors);
        prop_assert_eq!(&inc.metadata_index, &batch.metadata_index);
        prop_assert_eq!(inc.doc_count, batch.doc_count);
        for l in batch.postings.keys() {
            prop_assert_eq!(inc.idf(l), batch.idf(l));
        }
    }

    #[test]
    fn document_vectors_are_unit_or_empty(seed in any::<u64>()) {
        let (kb, lem) = corpus(seed, 20);
        let index = Index::build(kb.documents.values(), &lem);
        for v in index.vectors.values() {
            prop_assert_eq!(v.len(), EMBED_DIM);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9 || norm == 0.0);
        }
    }
}
