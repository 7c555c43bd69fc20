//! Instruction-tuning records, prediction prompts and dataset mixing.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedSample;
use crate::catalog::{CatalogError, LabelCatalog};
use crate::corpus::LabelScheme;
use crate::landmark::LandmarkSet;
use crate::prompts::tagging_prompt;
use crate::rng::{rng_with, salt_str};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmitError {
    #[error("record has no labels")]
    EmptyLabels,
    #[error("label `{0}` cannot be written inside a bracket list")]
    BadLabel(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("part `{part}` uses scheme {got}, expected {expected}")]
    SchemeMismatch { part: String, expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

pub fn build_predict_prompt(text: &str, subject: &str) -> String {
    tagging_prompt(subject, text)
}

/// `[a, b]` with labels in catalog casing.
pub fn format_output(labels: &[String], catalog: &LabelCatalog) -> Result<String, EmitError> {
    if labels.is_empty() {
        return Err(EmitError::EmptyLabels);
    }
    let shown: Vec<String> = labels
        .iter()
        .map(|l| {
            let d = catalog.display(l).map_or_else(|| l.clone(), ToString::to_string);
            if d.is_empty() || d.contains(['[', ']', ',']) {
                Err(EmitError::BadLabel(d))
            } else {
                Ok(d)
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(format!("[{}]", shown.join(", ")))
}

/// Training record for one labeled text. Two-level labels given area-first
/// are put back in domain, area order.
pub fn build_train_record(
    text: &str,
    labels: &[String],
    subject: &str,
    scheme: LabelScheme,
    catalog: &LabelCatalog,
) -> Result<FineTuneRecord, EmitError> {
    if labels.is_empty() {
        return Err(EmitError::EmptyLabels);
    }
    let mut labels = labels.to_vec();
    if scheme == LabelScheme::Hierarchical2
        && labels.len() == 2
        && !catalog.is_domain(&labels[0])
        && catalog.is_domain(&labels[1])
    {
        labels.swap(0, 1);
    }
    catalog.validate(&labels, scheme)?;
    Ok(FineTuneRecord {
        instruction: build_predict_prompt(text, subject),
        input: String::new(),
        output: format_output(&labels, catalog)?,
    })
}

/// Records for the successful samples; samples whose labels do not validate
/// are skipped and counted.
pub fn records_from_samples(
    samples: &[AugmentedSample],
    subject: &str,
    scheme: LabelScheme,
    catalog: &LabelCatalog,
) -> (Vec<FineTuneRecord>, usize) {
    let mut skipped = 0;
    let records = samples
        .iter()
        .filter(|s| s.is_ok())
        .filter_map(|s| match build_train_record(&s.text, &s.labels, subject, scheme, catalog) {
            Ok(r) => Some(r),
            Err(_) => {
                skipped += 1;
                None
            }
        })
        .collect();
    (records, skipped)
}

/// Records for the labeled landmarks; `text_of` looks up a document's text.
pub fn records_from_landmarks<'a>(
    landmarks: &LandmarkSet,
    text_of: impl Fn(&str) -> Option<&'a str>,
    subject: &str,
    scheme: LabelScheme,
    catalog: &LabelCatalog,
) -> (Vec<FineTuneRecord>, usize) {
    let mut skipped = 0;
    let records = landmarks
        .labeled()
        .filter_map(|e| {
            let r = text_of(&e.doc_id)
                .ok_or(EmitError::EmptyLabels)
                .and_then(|t| build_train_record(t, &e.labels, subject, scheme, catalog));
            match r {
                Ok(r) => Some(r),
                Err(_) => {
                    skipped += 1;
                    None
                }
            }
        })
        .collect();
    (records, skipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPart {
    pub name: String,
    pub scheme: LabelScheme,
    pub records: Vec<FineTuneRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartCount {
    pub source: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub parts: Vec<PartCount>,
    pub scheme: LabelScheme,
    pub subject: String,
    pub seed: u64,
    #[serde(default)]
    pub output: String,
    pub total: usize,
}

/// Concatenates the parts and shuffles with `seed`.
pub fn combine_datasets(
    parts: Vec<DatasetPart>,
    scheme: LabelScheme,
    subject: &str,
    seed: u64,
) -> Result<(Vec<FineTuneRecord>, DatasetManifest), EmitError> {
    let mut all = Vec::new();
    let mut counts = Vec::new();
    for p in parts {
        if p.scheme != scheme {
            return Err(EmitError::SchemeMismatch {
                part: p.name,
                expected: scheme.as_str().into(),
                got: p.scheme.as_str().into(),
            });
        }
        counts.push(PartCount {
            source: p.name,
            count: p.records.len(),
        });
        all.extend(p.records);
    }
    all.shuffle(&mut rng_with(seed, &[salt_str("combine")]));
    let manifest = DatasetManifest {
        parts: counts,
        scheme,
        subject: subject.into(),
        seed,
        output: String::new(),
        total: all.len(),
    };
    Ok((all, manifest))
}
