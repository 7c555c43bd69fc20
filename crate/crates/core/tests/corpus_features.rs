use std::collections::BTreeSet;

use proptest::prelude::*;
use synthlabel_core::corpus::{split_corpus, Corpus, Document, LabelScheme, Split, SplitRatios};
use synthlabel_core::llm::{Embedder, LlmError};
use synthlabel_core::text::normalize_label;
use synthlabel_core::vectorize::{cosine_similarity, embed_corpus, tfidf_fit_transform, Rows};

fn corpus(n: usize) -> Corpus {
    let docs = (0..n)
        .map(|i| Document::new(format!("d{i}"), &format!("text number {i} about topic {}", i % 3), ["earn"], Split::Train).unwrap())
        .collect();
    Corpus::new("t", LabelScheme::MultiLabel, docs).unwrap()
}

/// Embeds each text as (length, byte sum, 1) so a reordering shows.
struct LenEmbedder;

impl Embedder for LenEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        Ok(texts
            .iter()
            .map(|t| vec![t.len() as f64, t.bytes().map(f64::from).sum::<f64>(), 1.0])
            .collect())
    }
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 3usize..120, seed in any::<u64>(), a in 1u32..10, b in 1u32..10, c in 1u32..10) {
        let total = f64::from(a + b + c);
        let ratios = SplitRatios::new(f64::from(a) / total, f64::from(b) / total, f64::from(c) / total).unwrap();
        let split = split_corpus(corpus(n), ratios, seed).unwrap();
        let mut seen = BTreeSet::new();
        let mut count = 0;
        for s in [Split::Train, Split::Validation, Split::Test] {
            for d in split.split(s) {
                prop_assert!(seen.insert(d.id.clone()), "{} in two splits", d.id);
                count += 1;
            }
        }
        prop_assert_eq!(count, n);
        prop_assert_eq!(split.split_sizes().iter().sum::<usize>(), n);
    }

    #[test]
    fn normalize_label_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize_label(&s);
        prop_assert_eq!(normalize_label(&once), once);
    }

    #[test]
    fn tfidf_rows_are_unit_and_vocab_bounded(
        texts in prop::collection::vec("[a-j]{1,4}( [a-j]{1,4}){0,12}", 1..20),
        max in 16usize..40,
    ) {
        let ids: Vec<String> = (0..texts.len()).map(|i| format!("d{i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let Ok((model, m)) = tfidf_fit_transform(&ids, &refs, max) else { return Ok(()) };
        prop_assert!(model.vocabulary.len() <= max);
        prop_assert_eq!(&m.doc_ids, &ids);
        let Rows::Sparse { rows, dim } = &m.rows else { panic!("tf-idf is sparse") };
        prop_assert!(*dim <= max);
        for r in rows {
            if r.is_empty() {
                continue;
            }
            let norm: f64 = r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn cosine_is_reflexive_and_symmetric(
        a in prop::collection::vec(-10.0..10.0f64, 1..16),
        seed in prop::collection::vec(-10.0..10.0f64, 16),
    ) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-6));
        let b: Vec<f64> = seed[..a.len()].to_vec();
        prop_assume!(b.iter().any(|x| x.abs() > 1e-6));
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(cosine_similarity(&a, &b).unwrap(), cosine_similarity(&b, &a).unwrap());
    }

    #[test]
    fn embedding_rows_follow_corpus_order(texts in prop::collection::vec("[a-z]{1,12}", 1..30), batch in 1usize..8) {
        let ids: Vec<String> = (0..texts.len()).map(|i| format!("d{i}")).collect();
        let m = embed_corpus(&ids, &texts, &LenEmbedder, batch).unwrap();
        let dense = m.to_dense();
        prop_assert_eq!(&m.doc_ids, &ids);
        for (i, t) in texts.iter().enumerate() {
            let alone = LenEmbedder.embed(std::slice::from_ref(t)).unwrap();
            prop_assert_eq!(dense.row(i), alone[0].as_slice());
        }
    }
}

#[test]
fn embedding_dimension_change_is_an_error() {
    struct Shifty;
    impl Embedder for Shifty {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
            Ok(texts.iter().map(|t| vec![1.0; t.len()]).collect())
        }
    }
    let ids = vec!["a".to_string(), "b".to_string()];
    let texts = vec!["x".to_string(), "yy".to_string()];
    assert!(embed_corpus(&ids, &texts, &Shifty, 1).is_err());
}

#[test]
fn hidden_train_labels_stay_retrievable() {
    let split = split_corpus(corpus(30), SplitRatios::new(0.5, 0.3, 0.2).unwrap(), 1).unwrap();
    for d in split.split(Split::Train) {
        assert!(d.visible_labels().is_none());
        assert_eq!(d.reveal_gold(), ["earn".to_string()]);
    }
    for d in split.split(Split::Test) {
        assert_eq!(d.visible_labels().unwrap(), ["earn".to_string()]);
    }
}
