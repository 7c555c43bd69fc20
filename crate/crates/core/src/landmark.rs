//! Landmarks: one representative document per cluster, chosen by distance to
//! the center or by asking a model, plus their human labels.
//!
//! A random control strategy draws landmarks uniformly from the pool instead;
//! several of those may share a cluster, so entries are keyed by slot rather
//! than by cluster. For the cluster-based strategies slot and cluster agree.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogError, LabelCatalog};
use crate::cluster::ClusterModel;
use crate::corpus::{Corpus, LabelScheme};
use crate::llm::{ChatModel, ChatRequest, LlmError};
use crate::matrix::{sq_dist, DenseMatrix};
use crate::prompts::select_prompt;
use crate::rng::rng_with;
use crate::text::{approx_tokens, normalize_label, truncate_words};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LandmarkError {
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("cluster {0} does not exist")]
    UnknownCluster(usize),
    #[error("point count ({points}) does not match the model ({model})")]
    ShapeMismatch { points: usize, model: usize },
    #[error("the llm strategy needs a chat model")]
    NoChatModel,
    #[error("asked for {want} random landmarks from {have} documents")]
    TooFewDocs { want: usize, have: usize },
    #[error("no landmark for {0}")]
    UnknownEntry(String),
    #[error("landmark for cluster {cluster} is `{expected}`, not `{got}`")]
    DocMismatch { cluster: usize, expected: String, got: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionStrategy {
    Centroid,
    LlmChoice,
    /// Uniform draw of `count` pool documents without replacement.
    Random { seed: u64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkStatus {
    Pending,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEntry {
    pub cluster: usize,
    pub doc_id: String,
    /// Index of the document in the clustered pool.
    pub doc_index: usize,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub annotator: String,
    pub status: LandmarkStatus,
    /// Set when the model's answer could not be used and the centroid pick
    /// was taken instead.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub strategy: SelectionStrategy,
    pub entries: BTreeMap<usize, LandmarkEntry>,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First labeled landmark of `cluster`, if any.
    pub fn labeled_for_cluster(&self, cluster: usize) -> Option<&LandmarkEntry> {
        self.entries
            .values()
            .find(|e| e.cluster == cluster && e.status == LandmarkStatus::Labeled)
    }

    pub fn labeled(&self) -> impl Iterator<Item = &LandmarkEntry> {
        self.entries.values().filter(|e| e.status == LandmarkStatus::Labeled)
    }

    pub fn pending(&self) -> impl Iterator<Item = (usize, &LandmarkEntry)> {
        self.entries
            .iter()
            .filter(|(_, e)| e.status == LandmarkStatus::Pending)
            .map(|(s, e)| (*s, e))
    }

    pub fn is_landmark(&self, doc_id: &str) -> bool {
        self.entries.values().any(|e| e.doc_id == doc_id)
    }

    fn slot_of_doc(&self, doc_id: &str) -> Option<usize> {
        self.entries.iter().find(|(_, e)| e.doc_id == doc_id).map(|(s, _)| *s)
    }

    /// Validates and stores labels for the landmark in `slot`. Labels are kept
    /// in canonical form and in the given order.
    pub fn label(
        &mut self,
        slot: usize,
        labels: &[String],
        catalog: &LabelCatalog,
        scheme: LabelScheme,
        annotator: &str,
    ) -> Result<(), LandmarkError> {
        let canon: Vec<String> = labels.iter().map(|l| normalize_label(l)).collect();
        catalog.validate(&canon, scheme)?;
        let entry = self
            .entries
            .get_mut(&slot)
            .ok_or_else(|| LandmarkError::UnknownEntry(format!("slot {slot}")))?;
        entry.labels = canon;
        entry.annotator = annotator.to_string();
        entry.status = LandmarkStatus::Labeled;
        Ok(())
    }

    /// Applies one imported row. The row names its landmark by doc id when
    /// given, otherwise by cluster.
    pub fn apply_row(
        &mut self,
        row: &LabelRow,
        catalog: &LabelCatalog,
        scheme: LabelScheme,
        annotator: &str,
    ) -> Result<(), LandmarkError> {
        let slot = match (&row.doc_id, row.cluster) {
            (Some(id), cluster) => {
                let slot = self
                    .slot_of_doc(id)
                    .ok_or_else(|| LandmarkError::UnknownEntry(format!("document `{id}`")))?;
                if let Some(c) = cluster {
                    if self.entries[&slot].cluster != c {
                        return Err(LandmarkError::DocMismatch {
                            cluster: c,
                            expected: self.entries[&slot].doc_id.clone(),
                            got: id.clone(),
                        });
                    }
                }
                slot
            }
            (None, Some(c)) => self
                .entries
                .iter()
                .find(|(_, e)| e.cluster == c)
                .map(|(s, _)| *s)
                .ok_or_else(|| LandmarkError::UnknownEntry(format!("cluster {c}")))?,
            (None, None) => return Err(LandmarkError::UnknownEntry("row without cluster or doc_id".into())),
        };
        self.label(slot, &row.labels, catalog, scheme, annotator)
    }

    /// Imports rows, keeping the good ones. Returns the rejected rows as
    /// `(row index, reason)`.
    pub fn import(
        &mut self,
        rows: &[LabelRow],
        catalog: &LabelCatalog,
        scheme: LabelScheme,
        annotator: &str,
    ) -> Vec<(usize, LandmarkError)> {
        rows.iter()
            .enumerate()
            .filter_map(|(i, r)| self.apply_row(r, catalog, scheme, annotator).err().map(|e| (i, e)))
            .collect()
    }

    /// Simulated annotation: copies the hidden gold labels of each landmark.
    /// Landmarks whose gold labels fail validation stay pending and are
    /// returned with the reason.
    pub fn reveal_gold(
        &mut self,
        corpus: &Corpus,
        catalog: &LabelCatalog,
        scheme: LabelScheme,
    ) -> Vec<(usize, LandmarkError)> {
        let slots: Vec<usize> = self.entries.keys().copied().collect();
        let mut failed = Vec::new();
        for slot in slots {
            let id = self.entries[&slot].doc_id.clone();
            let gold = match corpus.get(&id) {
                Some(d) => d.reveal_gold().to_vec(),
                None => {
                    failed.push((slot, LandmarkError::UnknownEntry(format!("document `{id}`"))));
                    continue;
                }
            };
            if let Err(e) = self.label(slot, &gold, catalog, scheme, "gold") {
                failed.push((slot, e));
            }
        }
        failed
    }

    pub fn to_rows(&self) -> Vec<LabelRow> {
        self.entries
            .values()
            .map(|e| LabelRow {
                cluster: Some(e.cluster),
                doc_id: Some(e.doc_id.clone()),
                labels: e.labels.clone(),
            })
            .collect()
    }
}

/// A line of the labels import/export file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub labels: Vec<String>,
}

/// Comma-separated labels as typed by an annotator, canonicalized; empty
/// pieces dropped.
pub fn parse_label_input(line: &str) -> Vec<String> {
    line.split(',')
        .map(normalize_label)
        .filter(|l| !l.is_empty())
        .collect()
}

fn check_shape(model: &ClusterModel, points: &DenseMatrix) -> Result<(), LandmarkError> {
    if points.rows() != model.n_points() {
        return Err(LandmarkError::ShapeMismatch {
            points: points.rows(),
            model: model.n_points(),
        });
    }
    Ok(())
}

/// Member closest to the cluster center; ties go to the lower index.
pub fn select_by_centroid(model: &ClusterModel, points: &DenseMatrix, cluster: usize) -> Result<usize, LandmarkError> {
    check_shape(model, points)?;
    let center = model.centers.get(cluster).ok_or(LandmarkError::UnknownCluster(cluster))?;
    model
        .members(cluster)
        .into_iter()
        .map(|i| (i, sq_dist(points.row(i), center)))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|(i, _)| i)
        .ok_or(LandmarkError::EmptyCluster(cluster))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmSelectConfig {
    /// Per-document word cap applied when the prompt would exceed the budget.
    pub word_cap: usize,
    /// Approximate token budget for one selection prompt.
    pub token_budget: usize,
    pub temperature: f64,
}

impl Default for LlmSelectConfig {
    fn default() -> Self {
        LlmSelectConfig {
            word_cap: 400,
            token_budget: 24_000,
            temperature: 0.0,
        }
    }
}

/// Index (as written, without mapping) of the last `[digits]` in `response`.
pub fn last_bracketed_index(response: &str) -> Option<usize> {
    let b = response.as_bytes();
    let mut found = None;
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'[' {
            let start = i + 1;
            let mut j = start;
            while j < b.len() && b[j].is_ascii_digit() {
                j += 1;
            }
            if j > start && j < b.len() && b[j] == b']' {
                found = response[start..j].parse().ok().or(found);
                i = j;
            }
        }
        i += 1;
    }
    found
}

/// Maps the model's answer onto a position among `n` listed documents. The
/// listing is numbered from 1; `[0]` is read as the first document.
pub fn resolve_choice(response: &str, n: usize) -> Option<usize> {
    match last_bracketed_index(response)? {
        0 => Some(0),
        i if i <= n => Some(i - 1),
        _ => None,
    }
}

/// The selection prompt for a cluster's members, truncating each document to
/// the word cap only if the full prompt is over budget.
pub fn selection_prompt(texts: &[&str], cfg: &LlmSelectConfig) -> String {
    let full = select_prompt(texts);
    if approx_tokens(&full) <= cfg.token_budget {
        return full;
    }
    let cut: Vec<String> = texts.iter().map(|t| truncate_words(t, cfg.word_cap).0).collect();
    let refs: Vec<&str> = cut.iter().map(String::as_str).collect();
    select_prompt(&refs)
}

/// Result of selecting landmarks, with notes about fallbacks.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub set: LandmarkSet,
    pub warnings: Vec<String>,
}

fn entry(cluster: usize, doc_ids: &[String], index: usize, fallback: bool) -> LandmarkEntry {
    LandmarkEntry {
        cluster,
        doc_id: doc_ids[index].clone(),
        doc_index: index,
        labels: Vec::new(),
        annotator: String::new(),
        status: LandmarkStatus::Pending,
        fallback,
    }
}

/// Picks landmarks for every non-empty cluster (or the random control).
///
/// `doc_ids` and `texts` are aligned with the model's points. The llm strategy
/// issues one batched request per multi-member cluster; singleton clusters are
/// decided without a call. Unusable answers and failed requests fall back to
/// the centroid pick with a warning.
pub fn select_landmarks(
    model: &ClusterModel,
    points: &DenseMatrix,
    doc_ids: &[String],
    texts: &[&str],
    strategy: SelectionStrategy,
    chat: Option<&dyn ChatModel>,
    cfg: &LlmSelectConfig,
) -> Result<Selection, LandmarkError> {
    check_shape(model, points)?;
    if doc_ids.len() != model.n_points() || texts.len() != model.n_points() {
        return Err(LandmarkError::ShapeMismatch {
            points: doc_ids.len().min(texts.len()),
            model: model.n_points(),
        });
    }
    let mut entries = BTreeMap::new();
    let mut warnings = Vec::new();
    match strategy {
        SelectionStrategy::Random { seed, count } => {
            let n = model.n_points();
            if count > n {
                return Err(LandmarkError::TooFewDocs { want: count, have: n });
            }
            let mut picks = sample(&mut rng_with(seed, &[0x1A4D]), n, count).into_vec();
            picks.sort_unstable();
            for (slot, i) in picks.into_iter().enumerate() {
                entries.insert(slot, entry(model.assignments[i], doc_ids, i, false));
            }
        }
        SelectionStrategy::Centroid => {
            for c in 0..model.k {
                match select_by_centroid(model, points, c) {
                    Ok(i) => {
                        entries.insert(c, entry(c, doc_ids, i, false));
                    }
                    Err(LandmarkError::EmptyCluster(_)) => warnings.push(format!("cluster {c} is empty; no landmark")),
                    Err(e) => return Err(e),
                }
            }
        }
        SelectionStrategy::LlmChoice => {
            let chat = chat.ok_or(LandmarkError::NoChatModel)?;
            let mut asks: Vec<(usize, Vec<usize>)> = Vec::new();
            for c in 0..model.k {
                let members = model.members(c);
                match members.len() {
                    0 => warnings.push(format!("cluster {c} is empty; no landmark")),
                    1 => {
                        entries.insert(c, entry(c, doc_ids, members[0], false));
                    }
                    _ => asks.push((c, members)),
                }
            }
            let reqs: Vec<ChatRequest> = asks
                .iter()
                .map(|(_, members)| {
                    let docs: Vec<&str> = members.iter().map(|&i| texts[i]).collect();
                    ChatRequest::user(chat.model_name(), selection_prompt(&docs, cfg), cfg.temperature)
                })
                .collect();
            let answers = chat.chat_batch(&reqs);
            for ((c, members), answer) in asks.into_iter().zip(answers) {
                let pick = match &answer {
                    Ok(text) => resolve_choice(text, members.len()),
                    Err(_) => None,
                };
                match pick {
                    Some(p) => {
                        entries.insert(c, entry(c, doc_ids, members[p], false));
                    }
                    None => {
                        let why = match answer {
                            Ok(text) => format!("no usable index in answer {:?}", truncate_words(&text, 20).0),
                            Err(e) => describe(&e),
                        };
                        log::warn!("cluster {c}: {why}; using the centroid pick");
                        warnings.push(format!("cluster {c}: {why}; used centroid"));
                        let i = select_by_centroid(model, points, c)?;
                        entries.insert(c, entry(c, doc_ids, i, true));
                    }
                }
            }
        }
    }
    Ok(Selection {
        set: LandmarkSet { strategy, entries },
        warnings,
    })
}

fn describe(e: &LlmError) -> String {
    format!("request failed ({e})")
}
