use proptest::prelude::*;
use synthlabel_core::augment::{
    extract_content_label, llm_rewrite, rag_generate, rag_request_prompt, wordnet_replace, AugmentStats, ExtractionStatus,
    LabelPolicy, RagConfig, RagContext, RewriteConfig, Source, SynonymDb, WordnetConfig,
};
use synthlabel_core::catalog::LabelCatalog;
use synthlabel_core::cluster::synthetic::{gaussian_blobs, BlobSpec};
use synthlabel_core::cluster::{Algorithm, ClusterModel, ClusterSpec};
use synthlabel_core::corpus::LabelScheme;
use synthlabel_core::landmark::{select_landmarks, LandmarkSet, LlmSelectConfig, SelectionStrategy};
use synthlabel_core::llm::{ChatModel, ChatRequest, FnChat, LlmError};
use synthlabel_core::matrix::DenseMatrix;
use synthlabel_core::prompts::{format_document, section, RAG_LABELED, RAG_PRIMARY, RAG_UNLABELED};

const WORDS: [&str; 12] = [
    "wheat", "prices", "rose", "sharply", "company", "said", "oil", "output", "fell", "bank", "rates", "cut",
];

fn setup(seed: u64, n: usize, k: usize) -> (DenseMatrix, ClusterModel, Vec<String>, Vec<String>) {
    let (x, _) = gaussian_blobs(&BlobSpec { n, dim: 3, centers: 4, spread: 1.0, box_half_width: 5.0, seed });
    let m = ClusterSpec::default_for(Algorithm::Gmm).fit(&x, k, seed).unwrap();
    let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
    let texts: Vec<String> = (0..n)
        .map(|i| (0..8).map(|j| WORDS[(i * 7 + j * 3) % WORDS.len()]).collect::<Vec<_>>().join(" ") + &format!(" doc{i}"))
        .collect();
    (x, m, ids, texts)
}

fn first_choice() -> FnChat<impl Fn(&ChatRequest) -> Result<String, LlmError>> {
    FnChat::new("m", |_: &ChatRequest| Ok("I pick [1]".to_string()))
}

fn labeled_set(model: &ClusterModel, x: &DenseMatrix, ids: &[String], texts: &[&str], cat: &LabelCatalog) -> LandmarkSet {
    let mut set = select_landmarks(model, x, ids, texts, SelectionStrategy::Centroid, None, &LlmSelectConfig::default())
        .unwrap()
        .set;
    let slots: Vec<usize> = set.entries.keys().copied().collect();
    for (n, slot) in slots.into_iter().enumerate() {
        // leave every third landmark pending
        if n % 3 != 2 {
            let label = ["earn", "acq", "crude", "grain"][n % 4].to_string();
            set.label(slot, &[label], cat, LabelScheme::MultiLabel, "t").unwrap();
        }
    }
    set
}

fn count(hay: &str, needle: &str) -> usize {
    hay.matches(needle).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn landmark_lies_in_its_cluster(seed in any::<u64>(), k in 2usize..8, count in 1usize..20) {
        let (x, m, ids, texts) = setup(seed, 40, k);
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let chat = first_choice();
        for strategy in [SelectionStrategy::Centroid, SelectionStrategy::LlmChoice, SelectionStrategy::Random { seed, count }] {
            let sel = select_landmarks(&m, &x, &ids, &refs, strategy, Some(&chat as &dyn ChatModel), &LlmSelectConfig::default()).unwrap();
            for e in sel.set.entries.values() {
                prop_assert_eq!(m.assignments[e.doc_index], e.cluster);
                prop_assert_eq!(&ids[e.doc_index], &e.doc_id);
            }
        }
    }

    #[test]
    fn centroid_selection_is_deterministic(seed in any::<u64>(), k in 2usize..8) {
        let (x, m, ids, texts) = setup(seed, 40, k);
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let a = select_landmarks(&m, &x, &ids, &refs, SelectionStrategy::Centroid, None, &LlmSelectConfig::default()).unwrap();
        let b = select_landmarks(&m, &x, &ids, &refs, SelectionStrategy::Centroid, None, &LlmSelectConfig::default()).unwrap();
        prop_assert_eq!(a.set, b.set);
    }

    #[test]
    fn stored_labels_are_always_in_catalog(labels in prop::collection::vec("[a-z-]{1,8}", 1..4)) {
        let cat = LabelCatalog::reuters();
        let (x, m, ids, texts) = setup(1, 20, 3);
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let mut set = select_landmarks(&m, &x, &ids, &refs, SelectionStrategy::Centroid, None, &LlmSelectConfig::default()).unwrap().set;
        let slot = *set.entries.keys().next().unwrap();
        let _ = set.label(slot, &labels, &cat, LabelScheme::MultiLabel, "fuzz");
        for e in set.entries.values() {
            prop_assert!(e.labels.iter().all(|l| cat.contains(l)));
        }
    }

    #[test]
    fn wordnet_and_rewrite_keep_labels(text in "[a-z]{2,8}( [a-z]{2,8}){0,15}", labels in prop::collection::vec("[a-z]{3,6}", 1..4), seed in any::<u64>()) {
        let db = SynonymDb::parse_tsv("prices\tcosts,quotes\nrose\tclimbed\nsaid\tstated\n", "t").unwrap();
        let src = Source { id: "s", text: &text, labels: &labels };
        let w = wordnet_replace(&src, &db, &WordnetConfig { replace_prob: 0.5, top_k: 2, n_variants: 4 }, seed).unwrap();
        let echo = FnChat::new("m", |r: &ChatRequest| Ok(r.prompt_text().chars().rev().collect()));
        let r = llm_rewrite(&[src], &echo, &RewriteConfig { n_variants: 3, temperature: 0.3 }, seed);
        for s in w.iter().chain(&r) {
            prop_assert_eq!(&s.labels, &labels);
        }
    }

    #[test]
    fn zero_probability_is_identity(text in "[a-z]{2,8}( [a-z]{2,8}){0,15}", seed in any::<u64>()) {
        let db = SynonymDb::parse_tsv("prices\tcosts\nrose\tclimbed\n", "t").unwrap();
        let labels = vec!["earn".to_string()];
        let src = Source { id: "s", text: &text, labels: &labels };
        for s in wordnet_replace(&src, &db, &WordnetConfig { replace_prob: 0.0, top_k: 3, n_variants: 3 }, seed).unwrap() {
            prop_assert_eq!(&s.text, &text);
        }
    }

    #[test]
    fn rag_prompt_reference_bounds(seed in any::<u64>(), k in 2usize..10, doc in 0usize..60, variant in 0usize..3) {
        let cat = LabelCatalog::reuters();
        let (x, m, ids, texts) = setup(seed, 60, k);
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let set = labeled_set(&m, &x, &ids, &refs, &cat);
        let ctx = RagContext { model: &m, landmarks: &set, ids: &ids, texts: &refs, catalog: &cat, scheme: LabelScheme::MultiLabel };
        let (prompt, _) = rag_request_prompt(&ctx, doc, variant, seed, &RagConfig::default()).unwrap();
        let labeled = section(&prompt, RAG_LABELED, &[RAG_UNLABELED]).unwrap();
        let unlabeled = section(&prompt, RAG_UNLABELED, &[RAG_PRIMARY]).unwrap();
        prop_assert!(count(labeled, "Label: [") <= 5);
        prop_assert!(count(unlabeled, "Content:") <= 3);
        prop_assert!(prompt.contains(&texts[doc]));
        prop_assert_eq!(section(&prompt, RAG_PRIMARY, &["\n\n*"]).unwrap(), texts[doc].as_str());
    }

    #[test]
    fn extraction_inverts_document_format(
        content in "[A-Za-z0-9]{1,10}( [A-Za-z0-9]{1,10}){0,20}",
        picks in prop::collection::vec(0usize..90, 1..4),
    ) {
        let cat = LabelCatalog::reuters();
        let all = cat.display_labels();
        let labels: Vec<String> = picks.iter().map(|&i| all[i].clone()).collect();
        let (c, l) = extract_content_label(&format_document(&content, &labels)).unwrap();
        prop_assert_eq!(c, content);
        prop_assert_eq!(l, labels);
    }

    #[test]
    fn accounting_is_balanced(seed in any::<u64>(), fail_mod in 2u64..7) {
        let cat = LabelCatalog::reuters();
        let (x, m, ids, texts) = setup(seed, 30, 4);
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let set = labeled_set(&m, &x, &ids, &refs, &cat);
        let ctx = RagContext { model: &m, landmarks: &set, ids: &ids, texts: &refs, catalog: &cat, scheme: LabelScheme::MultiLabel };
        // mixes good answers, unparseable ones, unknown labels and transport errors
        let chat = FnChat::new("m", move |r: &ChatRequest| match r.seed.unwrap_or(0) % (fail_mod + 3) {
            0 => Err(LlmError::Transport("down".into())),
            1 => Ok("no markers at all".into()),
            2 => Ok("Content: x\nLabel: [banana]".into()),
            _ => Ok("Content: fine text\nLabel: [earn]".into()),
        });
        let docs: Vec<usize> = (0..ids.len()).collect();
        let cfg = RagConfig::default();
        let (samples, _) = rag_generate(&ctx, &docs, &chat, &cfg, seed).unwrap();
        let stats = AugmentStats::tally(&samples);
        prop_assert_eq!(stats.attempted, ids.len() * cfg.n_variants);
        prop_assert_eq!(stats.attempted, stats.ok + stats.regex_fail + stats.label_filtered + stats.gateway_failed);
        prop_assert!(stats.balanced());
        for s in &samples {
            if s.status == ExtractionStatus::Ok {
                prop_assert!(s.labels.iter().all(|l| cat.contains(l)));
            }
        }
    }
}

#[test]
fn random_landmarks_are_a_uniform_sample() {
    let (x, m, ids, texts) = setup(5, 30, 4);
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let mut hits = [0usize; 30];
    let trials = 3000;
    for seed in 0..trials {
        let sel = select_landmarks(&m, &x, &ids, &refs, SelectionStrategy::Random { seed, count: 5 }, None, &LlmSelectConfig::default()).unwrap();
        let mut docs: Vec<usize> = sel.set.entries.values().map(|e| e.doc_index).collect();
        assert_eq!(docs.len(), 5);
        docs.dedup();
        assert_eq!(docs.len(), 5, "drawn without replacement");
        for d in docs {
            hits[d] += 1;
        }
    }
    // each document is drawn with probability 5/30
    let expected = trials as f64 * 5.0 / 30.0;
    let chi2: f64 = hits.iter().map(|&h| (h as f64 - expected).powi(2) / expected).sum();
    // 29 degrees of freedom; 0.999 quantile is about 58.3
    assert!(chi2 < 58.3, "chi-square {chi2}");
}

#[test]
fn rag_policy_keep_all_retains_unknown_labels() {
    let cat = LabelCatalog::reuters();
    let (x, m, ids, texts) = setup(2, 20, 3);
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let set = labeled_set(&m, &x, &ids, &refs, &cat);
    let ctx = RagContext { model: &m, landmarks: &set, ids: &ids, texts: &refs, catalog: &cat, scheme: LabelScheme::MultiLabel };
    let chat = FnChat::new("m", |_: &ChatRequest| Ok("Content: t\nLabel: [banana, earn]".to_string()));
    let cfg = RagConfig { n_variants: 1, policy: LabelPolicy::KeepAll, ..RagConfig::default() };
    let (samples, _) = rag_generate(&ctx, &[0], &chat, &cfg, 1).unwrap();
    assert_eq!(samples[0].labels, ["banana", "earn"]);
    let cfg = RagConfig { policy: LabelPolicy::DropUnknown, ..cfg };
    let (samples, _) = rag_generate(&ctx, &[0], &chat, &cfg, 1).unwrap();
    assert_eq!(samples[0].labels, ["earn"]);
    assert_eq!(samples[0].dropped_labels, ["banana"]);
}
