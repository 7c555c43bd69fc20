use std::io::Cursor;
use std::path::Path;

use proptest::prelude::*;
use synthlabel::annotate::annotate_interactive;
use synthlabel::io::{
    corpus_to_jsonl, load_catalog, load_corpus, path_component, validate_dataset, write_catalog, CorpusFormat, EmbeddingCache,
    IoError,
};
use synthlabel_core::catalog::LabelCatalog;
use synthlabel_core::cluster::synthetic::{gaussian_blobs, BlobSpec};
use synthlabel_core::cluster::{Algorithm, ClusterSpec};
use synthlabel_core::corpus::{Corpus, Document, LabelScheme, Split};
use synthlabel_core::landmark::{select_landmarks, LandmarkSet, LandmarkStatus, LlmSelectConfig, SelectionStrategy};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corpus_jsonl_round_trip(docs in prop::collection::vec(("[ -~]{1,40}", prop::collection::vec("[a-z]{2,6}", 0..3), 0usize..3), 1..15)) {
        let splits = [Split::Train, Split::Validation, Split::Test];
        let docs: Vec<Document> = docs
            .iter()
            .enumerate()
            .filter_map(|(i, (t, l, s))| Document::new(format!("id{i}"), t, l, splits[*s]).ok())
            .collect();
        prop_assume!(!docs.is_empty());
        let corpus = Corpus::new("c", LabelScheme::MultiLabel, docs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.jsonl", &corpus_to_jsonl(&corpus));
        let back = load_corpus(&p, CorpusFormat::Jsonl, "c", LabelScheme::MultiLabel).unwrap();
        prop_assert_eq!(back.documents(), corpus.documents());
    }

    #[test]
    fn path_components_are_injective(a in "\\PC{0,12}", b in "\\PC{0,12}") {
        let (pa, pb) = (path_component(&a), path_component(&b));
        prop_assert_eq!(a == b, pa == pb);
        prop_assert!(!pa.contains('/') && !pa.starts_with('.'));
    }
}

#[test]
fn catalogs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for cat in [LabelCatalog::reuters(), LabelCatalog::wos()] {
        let p = dir.path().join("cat.json");
        write_catalog(&p, &cat).unwrap();
        assert_eq!(load_catalog(&p).unwrap(), cat);
    }
    let bad = write(dir.path(), "bad.json", r#"{"labels": ["CS", "ML", "extra"], "hierarchy": {"CS": ["ML"]}}"#);
    assert!(load_catalog(&bad).unwrap_err().to_string().contains("extra"));
}

#[test]
fn corpus_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let dup = write(dir.path(), "dup.jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
    let e = load_corpus(&dup, CorpusFormat::Jsonl, "c", LabelScheme::MultiLabel).unwrap_err();
    assert!(matches!(e, IoError::Parse { line: 2, .. }), "{e}");
    let csv = write(dir.path(), "c.csv", "id,text,labels,split\na,hello there,earn;acq,test\nb,more,,\n");
    let c = load_corpus(&csv, CorpusFormat::Csv, "c", LabelScheme::MultiLabel).unwrap();
    assert_eq!(c.documents()[0].reveal_gold(), ["earn", "acq"]);
    assert_eq!(c.documents()[0].split, Split::Test);
    assert_eq!(c.documents()[1].split, Split::Train);
    let missing = load_corpus(&dir.path().join("nope.jsonl"), CorpusFormat::Jsonl, "c", LabelScheme::MultiLabel).unwrap_err();
    assert!(matches!(missing, IoError::Io { .. }));
}

#[test]
fn dataset_validation() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "g.jsonl", "{\"instruction\":\"tag this\",\"input\":\"\",\"output\":\"[earn, acq]\"}\n");
    assert_eq!(validate_dataset(&good).unwrap(), 1);
    for (name, body, line) in [
        ("extra", "{\"instruction\":\"a\",\"input\":\"\",\"output\":\"[earn]\",\"x\":1}\n", Some(1)),
        ("nolist", "{\"instruction\":\"a\",\"input\":\"\",\"output\":\"[earn]\"}\n{\"instruction\":\"a\",\"input\":\"\",\"output\":\"earn\"}\n", Some(2)),
        ("number", "{\"instruction\":\"a\",\"input\":0,\"output\":\"[earn]\"}\n", Some(1)),
        ("crlf", "{\"instruction\":\"a\",\"input\":\"\",\"output\":\"[earn]\"}\r\n", None),
    ] {
        let p = write(dir.path(), name, body);
        match (validate_dataset(&p).unwrap_err(), line) {
            (IoError::Parse { line: l, .. }, Some(want)) => assert_eq!(l, want, "{name}"),
            (IoError::Invalid { .. }, None) => {}
            (e, _) => panic!("{name}: {e}"),
        }
    }
}

#[test]
fn embedding_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cache = EmbeddingCache::new(dir.path());
    assert_eq!(cache.get("bge/m3", "doc/1"), None);
    cache.put("bge/m3", "doc/1", &[0.5, -1.0]).unwrap();
    assert_eq!(cache.get("bge/m3", "doc/1"), Some(vec![0.5, -1.0]));
    assert!(cache.path("bge/m3", "doc/1").starts_with(dir.path()));
}

fn landmarks() -> (LandmarkSet, Vec<String>) {
    let (x, _) = gaussian_blobs(&BlobSpec { n: 30, dim: 2, centers: 3, spread: 0.5, box_half_width: 10.0, seed: 3 });
    let m = ClusterSpec::default_for(Algorithm::Hierarchical).fit(&x, 3, 3).unwrap();
    let ids: Vec<String> = (0..30).map(|i| format!("d{i}")).collect();
    let texts: Vec<String> = (0..30).map(|i| format!("text of document {i}")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let set = select_landmarks(&m, &x, &ids, &refs, SelectionStrategy::Centroid, None, &LlmSelectConfig::default())
        .unwrap()
        .set;
    (set, texts)
}

fn run(set: &mut LandmarkSet, input: &str, saves: &mut Vec<LandmarkSet>) -> (synthlabel::annotate::AnnotateSummary, String) {
    let cat = LabelCatalog::reuters();
    let mut out = Vec::new();
    let summary = annotate_interactive(
        set,
        |id| Some(format!("text of {id}")),
        &cat,
        LabelScheme::MultiLabel,
        "tester",
        Cursor::new(input.to_string()),
        &mut out,
        |s| {
            saves.push(s.clone());
            Ok(())
        },
    )
    .unwrap();
    (summary, String::from_utf8(out).unwrap())
}

#[test]
fn interactive_skip_reject_quit_and_resume() {
    let (mut set, _) = landmarks();
    assert_eq!(set.len(), 3);
    let mut saves = Vec::new();
    // first entry: a bad label, then a good one; second: skip; then quit
    let (s, out) = run(&mut set, "banana\nEarn, ACQ\ns\nq\n", &mut saves);
    assert_eq!((s.labeled, s.skipped, s.remaining, s.stopped_early), (1, 1, 2, true));
    assert!(out.contains("rejected:"));
    assert_eq!(saves.len(), 1);
    let first = set.labeled().next().unwrap();
    assert_eq!(first.labels, ["earn", "acq"]);
    assert_eq!(first.annotator, "tester");

    // resuming from the persisted state only visits pending entries
    let mut resumed = saves.last().unwrap().clone();
    let (s, out) = run(&mut resumed, "crude\ngrain\n", &mut saves);
    assert_eq!((s.labeled, s.skipped, s.remaining, s.stopped_early), (2, 0, 0, false));
    assert!(out.contains("2 of 3 landmarks pending"));
    assert!(resumed.entries.values().all(|e| e.status == LandmarkStatus::Labeled));

    // end of input stops early without touching anything
    let (mut fresh, _) = landmarks();
    let (s, _) = run(&mut fresh, "", &mut Vec::new());
    assert_eq!((s.labeled, s.remaining, s.stopped_early), (0, 3, true));
}
