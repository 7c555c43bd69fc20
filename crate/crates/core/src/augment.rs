//! Augmentation of labeled landmarks and unlabeled pool documents: synonym
//! replacement, model rewrites, and retrieval-augmented generation (RAG) with
//! extraction of the generated `Content:` / `Label:` block.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::catalog::LabelCatalog;
use crate::cluster::{top_clusters, ClusterModel};
use crate::corpus::LabelScheme;
use crate::landmark::LandmarkSet;
use crate::llm::{ChatModel, ChatRequest};
use crate::prompts::{rag_prompt, rewrite_prompt, LabeledRef};
use crate::rng::{derive_seed, rng_with, salt_str};
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("synonym table is empty")]
    EmptySynonymDb,
    #[error("synonym table line {line}: {reason}")]
    BadSynonymLine { line: usize, reason: String },
    #[error("replace probability must be in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("top_k must be positive")]
    BadTopK,
    #[error("pool index {0} out of range")]
    BadIndex(usize),
    #[error("the pool has {texts} texts but the model has {model} points")]
    ShapeMismatch { texts: usize, model: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wordnet,
    Rewrite,
    Rag,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Wordnet, Method::Rewrite, Method::Rag];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wordnet => "wordnet",
            Method::Rewrite => "rewrite",
            Method::Rag => "rag",
        }
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStatus {
    Ok,
    RegexFail,
    LabelFiltered,
    GatewayFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSample {
    pub id: String,
    pub method: Method,
    pub source_id: String,
    pub text: String,
    pub labels: Vec<String>,
    pub status: ExtractionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default)]
    pub variant: usize,
    /// Extracted labels removed by the label policy.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AugmentedSample {
    fn new(method: Method, source_id: &str, variant: usize) -> Self {
        AugmentedSample {
            id: format!("{}:{source_id}:{variant}", method.as_str()),
            method,
            source_id: source_id.to_string(),
            text: String::new(),
            labels: Vec::new(),
            status: ExtractionStatus::Ok,
            prompt_hash: None,
            variant,
            dropped_labels: Vec::new(),
            error: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExtractionStatus::Ok
    }

    /// Every extracted label, including the ones the policy dropped.
    pub fn all_labels(&self) -> impl Iterator<Item = &String> {
        self.labels.iter().chain(&self.dropped_labels)
    }
}

/// A labeled document to augment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub labels: &'a [String],
}

// ---------------------------------------------------------------- synonyms

/// Lemma to synonyms, closest first. Lookups never return the lemma itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynonymDb {
    map: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub source: String,
}

impl SynonymDb {
    /// Parses `lemma<TAB>syn1,syn2,...` lines. Blank lines and `#` comments are
    /// skipped; underscores in multi-word lemmas become spaces.
    pub fn parse_tsv(text: &str, source: &str) -> Result<Self, AugmentError> {
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (lemma, syns) = line.split_once('\t').ok_or_else(|| AugmentError::BadSynonymLine {
                line: n + 1,
                reason: "missing tab separator".into(),
            })?;
            let lemma = clean_lemma(lemma);
            if lemma.is_empty() {
                return Err(AugmentError::BadSynonymLine {
                    line: n + 1,
                    reason: "empty lemma".into(),
                });
            }
            let list = map.entry(lemma.clone()).or_default();
            for s in syns.split(',').map(clean_lemma) {
                if !s.is_empty() && s != lemma && !list.contains(&s) {
                    list.push(s);
                }
            }
        }
        map.retain(|_, v| !v.is_empty());
        if map.is_empty() {
            return Err(AugmentError::EmptySynonymDb);
        }
        Ok(SynonymDb {
            map,
            source: source.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn synonyms(&self, lemma: &str) -> &[String] {
        self.map.get(&normalize_label(lemma)).map_or(&[], Vec::as_slice)
    }
}

fn clean_lemma(s: &str) -> String {
    normalize_label(&s.replace('_', " "))
}

const FUNCTION_WORDS: &[&str] = &[
    "about", "above", "after", "again", "against", "all", "also", "and", "any", "are", "because",
    "been", "before", "being", "below", "between", "both", "but", "can", "could", "did", "does",
    "doing", "down", "during", "each", "few", "for", "from", "further", "had", "has", "have",
    "having", "her", "here", "hers", "him", "his", "how", "into", "its", "itself", "just", "may",
    "might", "more", "most", "must", "nor", "not", "now", "off", "once", "only", "other", "our",
    "ours", "out", "over", "own", "same", "shall", "she", "should", "some", "such", "than", "that",
    "the", "their", "theirs", "them", "then", "there", "these", "they", "this", "those", "through",
    "too", "under", "until", "very", "was", "were", "what", "when", "where", "which", "while",
    "who", "whom", "why", "will", "with", "would", "you", "your", "yours",
];

fn is_content_word(lower: &str) -> bool {
    lower.chars().count() >= 3 && FUNCTION_WORDS.binary_search(&lower).is_err()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WordnetConfig {
    pub replace_prob: f64,
    pub top_k: usize,
    pub n_variants: usize,
}

impl Default for WordnetConfig {
    fn default() -> Self {
        WordnetConfig {
            replace_prob: 0.15,
            top_k: 3,
            n_variants: 10,
        }
    }
}

fn match_case(original: &str, replacement: &str) -> String {
    let mut chars = original.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    let all_upper = original.chars().count() > 1 && original.chars().all(|c| !c.is_lowercase());
    if all_upper {
        replacement.to_uppercase()
    } else if first_upper {
        let mut r = replacement.chars();
        r.next()
            .map(|c| c.to_uppercase().chain(r).collect())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

/// One synonym-replacement pass over `text`. Words are maximal alphabetic
/// runs; everything else is copied through.
pub fn replace_synonyms(text: &str, db: &SynonymDb, replace_prob: f64, top_k: usize, rng: &mut crate::rng::Rng) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let word_len: usize = rest
            .char_indices()
            .find(|(_, c)| !c.is_alphabetic())
            .map_or(rest.len(), |(i, _)| i);
        if word_len == 0 {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
            continue;
        }
        let word = &rest[..word_len];
        rest = &rest[word_len..];
        let lower = word.to_lowercase();
        let syns = db.synonyms(&lower);
        if replace_prob > 0.0 && is_content_word(&lower) && !syns.is_empty() && rng.random::<f64>() < replace_prob {
            let pool = &syns[..top_k.min(syns.len())];
            let pick = &pool[rng.random_range(0..pool.len())];
            out.push_str(&match_case(word, pick));
        } else {
            out.push_str(word);
        }
    }
    out
}

/// Synonym-replaced variants of a labeled document. Variant `v` draws from a
/// stream derived from (seed, document id, v), so variants are reproducible
/// one by one.
pub fn wordnet_replace(src: &Source<'_>, db: &SynonymDb, cfg: &WordnetConfig, seed: u64) -> Result<Vec<AugmentedSample>, AugmentError> {
    if db.is_empty() {
        return Err(AugmentError::EmptySynonymDb);
    }
    if !(0.0..=1.0).contains(&cfg.replace_prob) {
        return Err(AugmentError::BadProbability(cfg.replace_prob));
    }
    if cfg.top_k == 0 {
        return Err(AugmentError::BadTopK);
    }
    Ok((0..cfg.n_variants)
        .map(|v| {
            let mut rng = rng_with(seed, &[salt_str("wordnet"), salt_str(src.id), v as u64]);
            let mut s = AugmentedSample::new(Method::Wordnet, src.id, v);
            s.text = replace_synonyms(src.text, db, cfg.replace_prob, cfg.top_k, &mut rng);
            s.labels = src.labels.to_vec();
            s
        })
        .collect())
}

// ----------------------------------------------------------------- rewrite

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewriteConfig {
    pub n_variants: usize,
    pub temperature: f64,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            n_variants: 10,
            temperature: 0.3,
        }
    }
}

fn variant_seed(seed: u64, method: Method, id: &str, v: usize) -> u64 {
    derive_seed(seed, &[salt_str(method.as_str()), salt_str(id), v as u64])
}

/// Strips an echoed `Rewritten Text:` lead-in and surrounding whitespace.
fn clean_rewrite(raw: &str) -> String {
    let t = raw.trim();
    let t = t.strip_prefix(crate::prompts::REWRITE_TAIL).unwrap_or(t);
    crate::text::normalize_text(t)
}

/// Model rewrites of each source; all requests go out as one batch. Labels
/// are copied from the source. A failed request yields a `gateway_failed`
/// sample, an empty answer a `regex_fail` one.
pub fn llm_rewrite<C: ChatModel + ?Sized>(sources: &[Source<'_>], chat: &C, cfg: &RewriteConfig, seed: u64) -> Vec<AugmentedSample> {
    let mut samples = Vec::new();
    let mut reqs = Vec::new();
    for src in sources {
        let prompt = rewrite_prompt(src.text);
        for v in 0..cfg.n_variants {
            let req = ChatRequest::user(chat.model_name(), prompt.clone(), cfg.temperature)
                .with_seed(variant_seed(seed, Method::Rewrite, src.id, v));
            let mut s = AugmentedSample::new(Method::Rewrite, src.id, v);
            s.labels = src.labels.to_vec();
            s.prompt_hash = Some(req.hash());
            samples.push(s);
            reqs.push(req);
        }
    }
    for (s, answer) in samples.iter_mut().zip(chat.chat_batch(&reqs)) {
        match answer {
            Ok(raw) => {
                s.text = clean_rewrite(&raw);
                if s.text.is_empty() {
                    s.status = ExtractionStatus::RegexFail;
                    s.error = Some("empty rewrite".into());
                }
            }
            Err(e) => {
                s.status = ExtractionStatus::GatewayFailed;
                s.error = Some(e.to_string());
            }
        }
    }
    samples
}

// ------------------------------------------------------------- extraction

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no `Label:` marker")]
    MissingLabel,
    #[error("no `Content:` marker before the label")]
    MissingContent,
    #[error("content is empty")]
    EmptyContent,
    #[error("label bracket is never closed")]
    UnclosedBracket,
    #[error("no labels after the marker")]
    NoLabels,
}

fn rfind_ci(hay: &str, needle: &str) -> Option<usize> {
    let n = needle.len();
    (0..=hay.len().checked_sub(n)?)
        .rev()
        .find(|&i| hay.is_char_boundary(i) && hay.is_char_boundary(i + n) && hay[i..i + n].eq_ignore_ascii_case(needle))
}

fn split_labels(segment: &str) -> Vec<String> {
    segment
        .split(',')
        .map(|l| {
            let l = l.trim_matches(|c: char| c.is_whitespace() || matches!(c, '[' | ']' | '"' | '\'' | '*' | '`' | '.'));
            normalize_label(l)
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Parses a generated `Content: ...` / `Label: [...]` block.
///
/// The last `Label:` marker wins and the content is the text after the last
/// `Content:` before it. A bracketed label list is read up to its matching
/// bracket (nested brackets are flattened); without brackets the rest of the
/// marker's line is used. Markers match case-insensitively.
pub fn extract_content_label(generated: &str) -> Result<(String, Vec<String>), ExtractError> {
    let label_at = rfind_ci(generated, "label:").ok_or(ExtractError::MissingLabel)?;
    let head = &generated[..label_at];
    let content_at = rfind_ci(head, "content:").ok_or(ExtractError::MissingContent)?;
    let content = head[content_at + "content:".len()..]
        .trim()
        .trim_matches(|c: char| c == '*' || c.is_whitespace());
    let content = crate::text::normalize_text(content);
    if content.is_empty() {
        return Err(ExtractError::EmptyContent);
    }
    let tail = generated[label_at + "label:".len()..].trim_start_matches(|c: char| c.is_whitespace() || c == '*');
    let segment = if tail.starts_with('[') {
        let mut depth = 0usize;
        let mut end = None;
        for (i, c) in tail.char_indices() {
            match c {
                '[' => depth += 1,
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        end = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        &tail[1..end.ok_or(ExtractError::UnclosedBracket)?]
    } else {
        tail.lines().next().unwrap_or("")
    };
    let labels = split_labels(segment);
    if labels.is_empty() {
        return Err(ExtractError::NoLabels);
    }
    Ok((content, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelPolicy {
    DropUnknown,
    KeepAll,
}

/// Applies the label policy to an extracted sample. Under `drop_unknown`
/// labels outside the catalog move to `dropped_labels`; a sample left with
/// nothing (or, for the two-level scheme, without a valid domain/area pair)
/// becomes `label_filtered`.
pub fn filter_labels(mut sample: AugmentedSample, catalog: &LabelCatalog, policy: LabelPolicy, scheme: LabelScheme) -> AugmentedSample {
    if sample.status != ExtractionStatus::Ok || policy == LabelPolicy::KeepAll {
        return sample;
    }
    let (keep, drop): (Vec<String>, Vec<String>) = sample.labels.drain(..).partition(|l| catalog.contains(l));
    sample.labels = keep;
    sample.dropped_labels.extend(drop);
    let valid = match scheme {
        LabelScheme::MultiLabel => !sample.labels.is_empty(),
        LabelScheme::Hierarchical2 => catalog.validate(&sample.labels, scheme).is_ok(),
    };
    if !valid {
        sample.status = ExtractionStatus::LabelFiltered;
    }
    sample
}

// --------------------------------------------------------------------- RAG

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RagConfig {
    pub n_variants: usize,
    pub temperature: f64,
    /// Labeled references come from this many top-ranked clusters.
    pub top_clusters: usize,
    pub unlabeled_refs: usize,
    pub policy: LabelPolicy,
}

impl Default for RagConfig {
    fn default() -> Self {
        RagConfig {
            n_variants: 3,
            temperature: 0.7,
            top_clusters: 5,
            unlabeled_refs: 3,
            policy: LabelPolicy::DropUnknown,
        }
    }
}

/// Everything RAG prompts draw on. `ids` and `texts` are aligned with the
/// model's points (the clustered pool).
pub struct RagContext<'a> {
    pub model: &'a ClusterModel,
    pub landmarks: &'a LandmarkSet,
    pub ids: &'a [String],
    pub texts: &'a [&'a str],
    pub catalog: &'a LabelCatalog,
    pub scheme: LabelScheme,
}

/// Prompt for one RAG variant of pool document `doc`, plus notes about
/// missing landmarks.
pub fn rag_request_prompt(ctx: &RagContext<'_>, doc: usize, variant: usize, seed: u64, cfg: &RagConfig) -> Result<(String, Vec<String>), AugmentError> {
    let n = ctx.model.n_points();
    if ctx.texts.len() != n || ctx.ids.len() != n {
        return Err(AugmentError::ShapeMismatch { texts: ctx.texts.len(), model: n });
    }
    if doc >= n {
        return Err(AugmentError::BadIndex(doc));
    }
    let mut notes = Vec::new();
    let depth = cfg.top_clusters.min(ctx.model.affinity[doc].len());
    let ranked = top_clusters(ctx.model, doc, depth).map_err(|_| AugmentError::BadIndex(doc))?;
    let display: Vec<Vec<String>> = ranked
        .iter()
        .map(|&c| match ctx.landmarks.labeled_for_cluster(c) {
            Some(e) => e
                .labels
                .iter()
                .map(|l| ctx.catalog.display(l).map_or_else(|| l.clone(), ToString::to_string))
                .collect(),
            None => Vec::new(),
        })
        .collect();
    let mut labeled = Vec::new();
    for (rank, &c) in ranked.iter().enumerate() {
        match ctx.landmarks.labeled_for_cluster(c) {
            Some(e) => labeled.push(LabeledRef {
                text: ctx.texts[e.doc_index],
                labels: &display[rank],
            }),
            None => notes.push(format!("no labeled landmark for cluster {c}")),
        }
    }
    let own = ctx.model.assignments[doc];
    let landmark_docs: BTreeSet<usize> = ctx.landmarks.labeled().map(|e| e.doc_index).collect();
    let pool: Vec<usize> = ctx
        .model
        .members(own)
        .into_iter()
        .filter(|&i| i != doc && !landmark_docs.contains(&i))
        .collect();
    let take = cfg.unlabeled_refs.min(pool.len());
    let mut rng = rng_with(seed, &[salt_str("rag-refs"), salt_str(&ctx.ids[doc]), variant as u64]);
    let unlabeled: Vec<&str> = sample(&mut rng, pool.len(), take)
        .into_iter()
        .map(|p| ctx.texts[pool[p]])
        .collect();
    Ok((rag_prompt(&ctx.catalog.prompt_listing(), &labeled, &unlabeled, ctx.texts[doc]), notes))
}

/// Generates `n_variants` samples for each pool document in `docs`, with fresh
/// unlabeled references per variant. All requests go out as one batch;
/// results keep (document, variant) order. Returns the samples and warnings.
pub fn rag_generate<C: ChatModel + ?Sized>(
    ctx: &RagContext<'_>,
    docs: &[usize],
    chat: &C,
    cfg: &RagConfig,
    seed: u64,
) -> Result<(Vec<AugmentedSample>, Vec<String>), AugmentError> {
    let mut samples = Vec::new();
    let mut reqs = Vec::new();
    let mut warnings = BTreeSet::new();
    for &d in docs {
        for v in 0..cfg.n_variants {
            let (prompt, notes) = rag_request_prompt(ctx, d, v, seed, cfg)?;
            for note in notes {
                warnings.insert(note);
            }
            let req = ChatRequest::user(chat.model_name(), prompt, cfg.temperature)
                .with_seed(variant_seed(seed, Method::Rag, &ctx.ids[d], v));
            let mut s = AugmentedSample::new(Method::Rag, &ctx.ids[d], v);
            s.prompt_hash = Some(req.hash());
            samples.push(s);
            reqs.push(req);
        }
    }
    let answers = chat.chat_batch(&reqs);
    let samples = samples
        .into_iter()
        .zip(answers)
        .map(|(mut s, answer)| {
            match answer {
                Ok(raw) => match extract_content_label(&raw) {
                    Ok((content, labels)) => {
                        s.text = content;
                        s.labels = labels;
                    }
                    Err(e) => {
                        s.status = ExtractionStatus::RegexFail;
                        s.error = Some(e.to_string());
                    }
                },
                Err(e) => {
                    s.status = ExtractionStatus::GatewayFailed;
                    s.error = Some(e.to_string());
                }
            }
            filter_labels(s, ctx.catalog, cfg.policy, ctx.scheme)
        })
        .collect();
    Ok((samples, warnings.into_iter().collect()))
}

/// Outcome counts; `attempted` always equals the sum of the other four.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub attempted: usize,
    pub ok: usize,
    pub regex_fail: usize,
    pub label_filtered: usize,
    pub gateway_failed: usize,
}

impl AugmentStats {
    pub fn tally<'a>(samples: impl IntoIterator<Item = &'a AugmentedSample>) -> Self {
        let mut s = AugmentStats::default();
        for x in samples {
            s.attempted += 1;
            match x.status {
                ExtractionStatus::Ok => s.ok += 1,
                ExtractionStatus::RegexFail => s.regex_fail += 1,
                ExtractionStatus::LabelFiltered => s.label_filtered += 1,
                ExtractionStatus::GatewayFailed => s.gateway_failed += 1,
            }
        }
        s
    }

    pub fn balanced(&self) -> bool {
        self.attempted == self.ok + self.regex_fail + self.label_filtered + self.gateway_failed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{Algorithm, FitInfo};
    use crate::landmark::{LandmarkEntry, LandmarkStatus, SelectionStrategy};
    use crate::llm::{FnChat, LlmError};
    use crate::prompts::{format_document, section, RAG_LABELED, RAG_PRIMARY, RAG_TASK, RAG_UNLABELED};
    use alloc::vec;
    use alloc::vec::Vec;

    fn s(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn function_words_sorted() {
        assert!(FUNCTION_WORDS.windows(2).all(|w| w[0] < w[1]));
    }

    fn db() -> SynonymDb {
        SynonymDb::parse_tsv("price\tcost,terms,toll,monetary_value\nrise\tclimb,ascent\nthe\tthat\nprice\tprice\n", "t").unwrap()
    }

    #[test]
    fn synonym_table_parsing() {
        let db = db();
        assert_eq!(db.synonyms("price"), &s(&["cost", "terms", "toll", "monetary value"])[..]);
        assert_eq!(db.synonyms("Rise"), &s(&["climb", "ascent"])[..]);
        assert!(db.synonyms("nothing").is_empty());
        assert!(matches!(SynonymDb::parse_tsv("a b c\n", ""), Err(AugmentError::BadSynonymLine { line: 1, .. })));
        assert_eq!(SynonymDb::parse_tsv("# only\n\n", ""), Err(AugmentError::EmptySynonymDb));
    }

    #[test]
    fn zero_probability_is_identity() {
        let labels = s(&["earn"]);
        let src = Source { id: "d", text: "The price will rise, Price!", labels: &labels };
        let cfg = WordnetConfig { replace_prob: 0.0, ..WordnetConfig::default() };
        for v in wordnet_replace(&src, &db(), &cfg, 3).unwrap() {
            assert_eq!(v.text, src.text);
            assert_eq!(v.labels, labels);
        }
    }

    #[test]
    fn full_probability_replaces_within_top_k() {
        let labels = s(&["earn"]);
        let src = Source { id: "d", text: "The Price will rise.", labels: &labels };
        let cfg = WordnetConfig { replace_prob: 1.0, top_k: 2, n_variants: 20 };
        let out = wordnet_replace(&src, &db(), &cfg, 9).unwrap();
        assert_eq!(out.len(), 20);
        for v in &out {
            assert!(v.text.starts_with("The "), "function word kept: {}", v.text);
            assert!(v.text.contains("Cost") || v.text.contains("Terms"), "{}", v.text);
            assert!(v.text.ends_with("climb.") || v.text.ends_with("ascent."), "{}", v.text);
        }
        assert_eq!(out, wordnet_replace(&src, &db(), &cfg, 9).unwrap());
        assert_eq!(wordnet_replace(&src, &db(), &WordnetConfig { replace_prob: 1.5, ..cfg }, 9), Err(AugmentError::BadProbability(1.5)));
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_content_label("Content: abc\nLabel: [corn, wheat]").unwrap(), ("abc".into(), s(&["corn", "wheat"])));
        assert_eq!(extract_content_label("no markers here"), Err(ExtractError::MissingLabel));
        assert_eq!(
            extract_content_label("Content: x\nLabel: CS, Machine learning").unwrap(),
            ("x".into(), s(&["cs", "machine learning"]))
        );
        assert_eq!(extract_content_label("Content: x\nLabel: [corn"), Err(ExtractError::UnclosedBracket));
        assert_eq!(extract_content_label("Content: x\nLabel: [[corn], wheat] tail").unwrap().1, s(&["corn", "wheat"]));
        assert_eq!(extract_content_label("Content: first\nLabel: [a]\nContent: second\nLabel: [b]").unwrap(), ("second".into(), s(&["b"])));
        assert_eq!(extract_content_label("Content:   \nLabel: [a]"), Err(ExtractError::EmptyContent));
        assert_eq!(extract_content_label("Content: x\nLabel: []"), Err(ExtractError::NoLabels));
    }

    proptest::proptest! {
        #[test]
        fn extraction_inverts_format(words in proptest::collection::vec("[a-zA-Z0-9]{1,8}", 1..30), picks in proptest::collection::vec(0usize..90, 1..4)) {
            let content = words.join(" ");
            let mut labels: Vec<String> = picks.iter().map(|&i| crate::catalog::REUTERS_TOPICS[i].to_string()).collect();
            labels.dedup();
            let (c, l) = extract_content_label(&format_document(&content, &labels)).unwrap();
            proptest::prop_assert_eq!(c, content);
            proptest::prop_assert_eq!(l, labels);
        }
    }

    #[test]
    fn filter_policies() {
        let cat = LabelCatalog::reuters();
        let mut x = AugmentedSample::new(Method::Rag, "d", 0);
        x.labels = s(&["earn", "made-up-tag"]);
        let kept = filter_labels(x.clone(), &cat, LabelPolicy::KeepAll, LabelScheme::MultiLabel);
        assert_eq!(kept.labels.len(), 2);
        let f = filter_labels(x.clone(), &cat, LabelPolicy::DropUnknown, LabelScheme::MultiLabel);
        assert_eq!(f.labels, s(&["earn"]));
        assert_eq!(f.dropped_labels, s(&["made-up-tag"]));
        assert!(f.is_ok());
        x.labels = s(&["made-up-tag"]);
        let f = filter_labels(x, &cat, LabelPolicy::DropUnknown, LabelScheme::MultiLabel);
        assert_eq!(f.status, ExtractionStatus::LabelFiltered);
        let wos = LabelCatalog::wos();
        let mut h = AugmentedSample::new(Method::Rag, "d", 0);
        h.labels = s(&["cs", "machine learning"]);
        assert!(filter_labels(h.clone(), &wos, LabelPolicy::DropUnknown, LabelScheme::Hierarchical2).is_ok());
        h.labels = s(&["machine learning", "cs"]);
        assert_eq!(filter_labels(h, &wos, LabelPolicy::DropUnknown, LabelScheme::Hierarchical2).status, ExtractionStatus::LabelFiltered);
    }

    #[test]
    fn rewrite_copies_labels_and_marks_failures() {
        let labels = s(&["corn"]);
        let srcs = [Source { id: "a", text: "grain prices", labels: &labels }];
        let chat = FnChat::new("m", |req: &ChatRequest| {
            if req.seed == Some(variant_seed(1, Method::Rewrite, "a", 2)) {
                Err(LlmError::Transport("down".into()))
            } else {
                Ok(section(&req.prompt_text(), crate::prompts::REWRITE_ORIGINAL, &[crate::prompts::REWRITE_TAIL]).unwrap().to_string())
            }
        });
        let out = llm_rewrite(&srcs, &chat, &RewriteConfig::default(), 1);
        assert_eq!(out.len(), 10);
        let stats = AugmentStats::tally(&out);
        assert_eq!((stats.ok, stats.gateway_failed), (9, 1));
        assert!(stats.balanced());
        for x in out.iter().filter(|x| x.is_ok()) {
            assert_eq!(x.text, "grain prices");
            assert_eq!(x.labels, labels);
        }
        let hashes: BTreeSet<_> = out.iter().map(|x| x.prompt_hash.clone()).collect();
        assert_eq!(hashes.len(), 10);
    }

    fn rag_fixture() -> (ClusterModel, LandmarkSet, Vec<String>, Vec<String>) {
        // 12 docs in 3 clusters of 4; doc 0, 4, 8 are the landmarks
        let assignments: Vec<usize> = (0..12).map(|i| i / 4).collect();
        let affinity = assignments
            .iter()
            .map(|&c| vec![(c, 0.6), ((c + 1) % 3, 0.3), ((c + 2) % 3, 0.1)])
            .collect();
        let model = ClusterModel {
            algorithm: Algorithm::Gmm,
            k: 3,
            seed: Some(0),
            assignments,
            centers: vec![vec![0.0]; 3],
            affinity,
            info: FitInfo::default(),
        };
        let labels = ["earn", "corn", "wheat"];
        let mut entries = BTreeMap::new();
        for (c, label) in labels.iter().enumerate() {
            entries.insert(
                c,
                LandmarkEntry {
                    cluster: c,
                    doc_id: format!("d{}", c * 4),
                    doc_index: c * 4,
                    labels: s(&[label]),
                    annotator: "t".into(),
                    status: if c == 2 { LandmarkStatus::Pending } else { LandmarkStatus::Labeled },
                    fallback: false,
                },
            );
        }
        let set = LandmarkSet { strategy: SelectionStrategy::Centroid, entries };
        let ids = (0..12).map(|i| format!("d{i}")).collect();
        let texts = (0..12).map(|i| format!("text number {i}")).collect();
        (model, set, ids, texts)
    }

    #[test]
    fn rag_prompt_contents() {
        let (model, set, ids, texts) = rag_fixture();
        let trefs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let cat = LabelCatalog::reuters();
        let ctx = RagContext { model: &model, landmarks: &set, ids: &ids, texts: &trefs, catalog: &cat, scheme: LabelScheme::MultiLabel };
        let cfg = RagConfig::default();
        let (p, notes) = rag_request_prompt(&ctx, 1, 0, 7, &cfg).unwrap();
        assert_eq!(notes, vec!["no labeled landmark for cluster 2".to_string()]);
        let labeled = section(&p, RAG_LABELED, &[RAG_UNLABELED]).unwrap();
        assert_eq!(labeled, "Content: text number 0\nLabel: [earn]\n\nContent: text number 4\nLabel: [corn]");
        let unlabeled = section(&p, RAG_UNLABELED, &[RAG_PRIMARY]).unwrap();
        let refs: Vec<&str> = unlabeled.split("\n\n").collect();
        assert_eq!(refs.len(), 2);
        for r in refs {
            assert!(r == "Content: text number 2" || r == "Content: text number 3", "{r}");
        }
        assert_eq!(section(&p, RAG_PRIMARY, &[RAG_TASK]).unwrap(), "text number 1");
    }

    #[test]
    fn rag_generation_and_accounting() {
        let (model, set, ids, texts) = rag_fixture();
        let trefs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let cat = LabelCatalog::reuters();
        let ctx = RagContext { model: &model, landmarks: &set, ids: &ids, texts: &trefs, catalog: &cat, scheme: LabelScheme::MultiLabel };
        let chat = FnChat::new("m", |req: &ChatRequest| {
            let p = req.prompt_text();
            let primary = section(&p, RAG_PRIMARY, &[RAG_TASK]).unwrap();
            match primary {
                "text number 1" => Ok(format!("Content: new {primary}\nLabel: [earn]")),
                "text number 2" => Ok("rambling".into()),
                "text number 3" => Ok("Content: y\nLabel: [invented]".into()),
                _ => Err(LlmError::Status { status: 500, body: String::new() }),
            }
        });
        let docs: Vec<usize> = (1..5).collect();
        let (out, _) = rag_generate(&ctx, &docs, &chat, &RagConfig::default(), 3).unwrap();
        assert_eq!(out.len(), 12);
        let stats = AugmentStats::tally(&out);
        assert_eq!(stats, AugmentStats { attempted: 12, ok: 3, regex_fail: 3, label_filtered: 3, gateway_failed: 3 });
        assert_eq!(out[0].text, "new text number 1");
        assert_eq!(out[0].id, "rag:d1:0");
        let (again, _) = rag_generate(&ctx, &docs, &chat, &RagConfig::default(), 3).unwrap();
        assert_eq!(out, again);
    }
}
