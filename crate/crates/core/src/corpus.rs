//! Documents, corpora and train/validation/test splits.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::text::{normalize_label, normalize_text};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has empty text")]
    EmptyText(String),
    #[error("document id is empty")]
    EmptyId,
    #[error("split needs at least 3 documents, corpus has {0}")]
    TooSmall(usize),
    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    BadRatios([f64; 3]),
    #[error("unknown split `{0}`")]
    UnknownSplit(String),
    #[error("unknown label scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Split {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" | "valid" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// Any number of labels, ordered by importance.
    MultiLabel,
    /// Exactly `[domain, area]`.
    Hierarchical2,
}

impl LabelScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelScheme::MultiLabel => "multi_label",
            LabelScheme::Hierarchical2 => "hierarchical_2",
        }
    }
}

impl fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for LabelScheme {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "multi_label" | "multi-label" => Ok(LabelScheme::MultiLabel),
            "hierarchical_2" | "hierarchical" | "hierarchical-2" => Ok(LabelScheme::Hierarchical2),
            other => Err(CorpusError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    gold_labels: Vec<String>,
    pub split: Split,
    /// Gold labels of the unlabeled pool are kept but not handed out through
    /// [`Document::visible_labels`].
    #[serde(default)]
    labels_hidden: bool,
}

impl Document {
    /// Normalizes text and labels. Fails on an empty id or text.
    pub fn new(
        id: impl Into<String>,
        text: &str,
        labels: impl IntoIterator<Item = impl AsRef<str>>,
        split: Split,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(CorpusError::EmptyId);
        }
        let text = normalize_text(text);
        if text.is_empty() {
            return Err(CorpusError::EmptyText(id));
        }
        let mut seen = BTreeSet::new();
        let gold_labels = labels
            .into_iter()
            .map(|l| normalize_label(l.as_ref()))
            .filter(|l| !l.is_empty() && seen.insert(l.clone()))
            .collect();
        Ok(Document {
            id,
            text,
            gold_labels,
            split,
            labels_hidden: false,
        })
    }

    pub fn labels_hidden(&self) -> bool {
        self.labels_hidden
    }

    /// Gold labels, unless they are hidden.
    pub fn visible_labels(&self) -> Option<&[String]> {
        (!self.labels_hidden).then_some(self.gold_labels.as_slice())
    }

    /// Gold labels regardless of the hidden flag. Only evaluation and
    /// simulated annotation should call this.
    pub fn reveal_gold(&self) -> &[String] {
        &self.gold_labels
    }

    pub fn set_hidden(&mut self, hidden: bool) {
        self.labels_hidden = hidden;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    /// 50% train, 30% validation, 20% test.
    pub const DEFAULT: SplitRatios = SplitRatios {
        train: 0.5,
        validation: 0.3,
        test: 0.2,
    };

    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, CorpusError> {
        let r = SplitRatios {
            train,
            validation,
            test,
        };
        r.validate()?;
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let a = self.as_array();
        let ok = a.iter().all(|r| r.is_finite() && *r > 0.0) && (a.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(CorpusError::BadRatios(a))
        }
    }

    /// Split sizes by largest remainder: every size is within one document of
    /// its exact share and the sizes sum to `n`. Ties in the remainder go to the
    /// earlier split.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let quotas = self.as_array().map(|r| n as f64 * r);
        let mut sizes = quotas.map(|q| libm::floor(q + 1e-9) as usize);
        let mut left = n.saturating_sub(sizes.iter().sum());
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let fa = quotas[a] - sizes[a] as f64;
            let fb = quotas[b] - sizes[b] as f64;
            fb.partial_cmp(&fa).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub scheme: LabelScheme,
    documents: Vec<Document>,
    pub split_ratios: Option<SplitRatios>,
    pub split_seed: Option<u64>,
}

impl Corpus {
    pub fn new(
        name: impl Into<String>,
        scheme: LabelScheme,
        documents: Vec<Document>,
    ) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            scheme,
            documents,
            split_ratios: None,
            split_seed: None,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Documents of one split, in corpus order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(move |d| d.split == split)
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        Split::ALL.map(|s| self.split(s).count())
    }

    /// Sets the hidden flag on every document of `split`.
    pub fn hide_labels(&mut self, split: Split, hidden: bool) {
        for d in self.documents.iter_mut().filter(|d| d.split == split) {
            d.labels_hidden = hidden;
        }
    }
}

/// Assigns every document to exactly one split by a seeded uniform shuffle
/// (no stratification). Train labels are flagged hidden.
pub fn split_corpus(mut corpus: Corpus, ratios: SplitRatios, seed: u64) -> Result<Corpus, CorpusError> {
    ratios.validate()?;
    let n = corpus.documents.len();
    if n < 3 {
        return Err(CorpusError::TooSmall(n));
    }
    let [n_train, n_val, _] = ratios.sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng::rng(seed));
    for (rank, &i) in order.iter().enumerate() {
        let split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
        let doc = &mut corpus.documents[i];
        doc.split = split;
        doc.labels_hidden = split == Split::Train;
    }
    corpus.split_ratios = Some(ratios);
    corpus.split_seed = Some(seed);
    Ok(corpus)
}
