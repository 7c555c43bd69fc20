//! Document features: native TF-IDF or vectors from an embedding endpoint.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::llm::{Embedder, LlmError};
use crate::matrix::{dot, norm, DenseMatrix};
use crate::text::tokens;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VectorError {
    #[error("max_features must be at least {min}, got {got}")]
    MaxFeatures { min: usize, got: usize },
    #[error("no documents to vectorize")]
    NoDocuments,
    #[error("vocabulary is empty: no document has a usable token")]
    EmptyVocabulary,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("feature matrix has a non-finite entry in row {0}")]
    NonFinite(usize),
    #[error("expected {expected} vectors from the embedder, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Tfidf,
    Embedding,
}

/// Smallest vocabulary accepted for clustering runs.
pub const MIN_MAX_FEATURES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfConfig {
    pub max_features: usize,
    /// Tokens shorter than this are dropped.
    pub min_token_len: usize,
}

impl TfidfConfig {
    pub fn new(max_features: usize) -> Self {
        TfidfConfig {
            max_features,
            min_token_len: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub config: TfidfConfig,
}

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rows {
    Sparse { dim: usize, rows: Vec<SparseRow> },
    Dense(DenseMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub doc_ids: Vec<String>,
    pub kind: FeatureKind,
    pub rows: Rows,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        match &self.rows {
            Rows::Sparse { dim, .. } => *dim,
            Rows::Dense(m) => m.cols(),
        }
    }

    /// Dense copy for the clustering algorithms.
    pub fn to_dense(&self) -> DenseMatrix {
        match &self.rows {
            Rows::Dense(m) => m.clone(),
            Rows::Sparse { dim, rows } => {
                let mut m = DenseMatrix::zeros(rows.len(), *dim);
                for (i, r) in rows.iter().enumerate() {
                    let out = m.row_mut(i);
                    for &(j, v) in r {
                        out[j] = v;
                    }
                }
                m
            }
        }
    }

    /// Rows whose ids appear in `keep`, in matrix order.
    pub fn subset(&self, keep: impl Fn(&str) -> bool) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.doc_ids[i])).collect();
        let doc_ids = idx.iter().map(|&i| self.doc_ids[i].clone()).collect();
        let rows = match &self.rows {
            Rows::Dense(m) => Rows::Dense(m.select_rows(&idx)),
            Rows::Sparse { dim, rows } => Rows::Sparse {
                dim: *dim,
                rows: idx.iter().map(|&i| rows[i].clone()).collect(),
            },
        };
        FeatureMatrix {
            doc_ids,
            kind: self.kind,
            rows,
        }
    }

    pub fn check_finite(&self) -> Result<(), VectorError> {
        let bad = match &self.rows {
            Rows::Dense(m) => (0..m.rows()).find(|&i| m.row(i).iter().any(|v| !v.is_finite())),
            Rows::Sparse { rows, .. } => rows.iter().position(|r| r.iter().any(|(_, v)| !v.is_finite())),
        };
        bad.map_or(Ok(()), |i| Err(VectorError::NonFinite(i)))
    }
}

fn doc_terms(text: &str, min_len: usize) -> impl Iterator<Item = String> + '_ {
    tokens(text).filter(move |t| t.chars().count() >= min_len)
}

impl TfidfModel {
    /// Keeps the `max_features` terms with the highest total count over the
    /// corpus (ties broken lexicographically); columns are in term order.
    /// idf = ln((1 + N) / (1 + df)) + 1.
    pub fn fit(texts: &[&str], config: TfidfConfig) -> Result<Self, VectorError> {
        if config.max_features == 0 {
            return Err(VectorError::MaxFeatures {
                min: 1,
                got: config.max_features,
            });
        }
        if texts.is_empty() {
            return Err(VectorError::NoDocuments);
        }
        let mut total: BTreeMap<String, u64> = BTreeMap::new();
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        for text in texts {
            let mut seen: BTreeMap<String, ()> = BTreeMap::new();
            for t in doc_terms(text, config.min_token_len) {
                *total.entry(t.clone()).or_default() += 1;
                seen.insert(t, ());
            }
            for (t, ()) in seen {
                *df.entry(t).or_default() += 1;
            }
        }
        if total.is_empty() {
            return Err(VectorError::EmptyVocabulary);
        }
        let mut ranked: Vec<(&String, u64)> = total.iter().map(|(t, c)| (t, *c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(config.max_features);
        let mut kept: Vec<&String> = ranked.into_iter().map(|(t, _)| t).collect();
        kept.sort();
        let n = texts.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(kept.len());
        for (col, term) in kept.into_iter().enumerate() {
            vocabulary.insert(term.clone(), col);
            idf.push(libm::log((1.0 + n) / (1.0 + df[term] as f64)) + 1.0);
        }
        Ok(TfidfModel {
            vocabulary,
            idf,
            config,
        })
    }

    /// Raw term counts times idf, L2-normalized. Documents with no in-vocabulary
    /// term stay all-zero.
    pub fn transform_one(&self, text: &str) -> SparseRow {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc_terms(text, self.config.min_token_len) {
            if let Some(&col) = self.vocabulary.get(&t) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut row: SparseRow = counts.into_iter().map(|(c, tf)| (c, tf * self.idf[c])).collect();
        let norm = libm::sqrt(row.iter().map(|(_, v)| v * v).sum::<f64>());
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    }

    pub fn transform(&self, ids: &[String], texts: &[&str]) -> FeatureMatrix {
        FeatureMatrix {
            doc_ids: ids.to_vec(),
            kind: FeatureKind::Tfidf,
            rows: Rows::Sparse {
                dim: self.vocabulary.len(),
                rows: texts.iter().map(|t| self.transform_one(t)).collect(),
            },
        }
    }
}

/// Fits on `texts` and transforms them. `max_features` below
/// [`MIN_MAX_FEATURES`] is rejected.
pub fn tfidf_fit_transform(
    ids: &[String],
    texts: &[&str],
    max_features: usize,
) -> Result<(TfidfModel, FeatureMatrix), VectorError> {
    if max_features < MIN_MAX_FEATURES {
        return Err(VectorError::MaxFeatures {
            min: MIN_MAX_FEATURES,
            got: max_features,
        });
    }
    let model = TfidfModel::fit(texts, TfidfConfig::new(max_features))?;
    let m = model.transform(ids, texts);
    Ok((model, m))
}

/// Embeds texts in batches of `batch_size`, keeping input order. Every batch
/// must return vectors of the same dimension.
pub fn embed_corpus<E: Embedder + ?Sized>(
    ids: &[String],
    texts: &[String],
    embedder: &E,
    batch_size: usize,
) -> Result<FeatureMatrix, VectorError> {
    let batch_size = batch_size.max(1);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
    let mut dim: Option<usize> = None;
    for chunk in texts.chunks(batch_size) {
        let vecs = embedder.embed(chunk)?;
        if vecs.len() != chunk.len() {
            return Err(VectorError::CountMismatch {
                expected: chunk.len(),
                got: vecs.len(),
            });
        }
        for v in vecs {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(LlmError::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    }
                    .into())
                }
                _ => {}
            }
            rows.push(v);
        }
    }
    let matrix = if rows.is_empty() {
        DenseMatrix::zeros(0, 0)
    } else {
        DenseMatrix::from_rows(&rows).expect("dimensions checked")
    };
    let fm = FeatureMatrix {
        doc_ids: ids.to_vec(),
        kind: FeatureKind::Embedding,
        rows: Rows::Dense(matrix),
    };
    fm.check_finite()?;
    Ok(fm)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| alloc::format!("d{i}")).collect()
    }

    #[test]
    fn idf_matches_hand_computation() {
        // "aa" appears in one of two documents: idf = ln(3/2) + 1
        let texts = ["aa aa bb", "bb cc"];
        let (model, m) = tfidf_fit_transform(&ids(2), &texts, 16).unwrap();
        let vocab: Vec<&str> = model.vocabulary.keys().map(String::as_str).collect();
        assert_eq!(vocab, ["aa", "bb", "cc"]);
        let expected_aa = libm::log(3.0 / 2.0) + 1.0;
        assert!((model.idf[model.vocabulary["aa"]] - expected_aa).abs() < 1e-12);
        assert!((model.idf[model.vocabulary["bb"]] - 1.0).abs() < 1e-12);
        // row 0: tf(aa)=2, tf(bb)=1 before normalization
        let dense = m.to_dense();
        let raw = [2.0 * expected_aa, 1.0, 0.0];
        let nrm = libm::sqrt(raw.iter().map(|v| v * v).sum::<f64>());
        for (got, want) in dense.row(0).iter().zip(raw) {
            assert!((got - want / nrm).abs() < 1e-12);
        }
    }

    #[test]
    fn single_letter_tokens_can_be_kept() {
        let model = TfidfModel::fit(&["a a b", "b c"], TfidfConfig { max_features: 10, min_token_len: 1 }).unwrap();
        assert_eq!(model.vocabulary.len(), 3);
        let idf_a = model.idf[model.vocabulary["a"]];
        assert!((idf_a - (libm::log(1.5) + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn single_doc_has_unit_norm() {
        let (_, m) = tfidf_fit_transform(&ids(1), &["xx"], 16).unwrap();
        assert!((norm(m.to_dense().row(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vocabulary_cap_breaks_ties_lexicographically() {
        let texts = ["zz yy xx ww", "zz"];
        let model = TfidfModel::fit(&texts, TfidfConfig::new(2)).unwrap();
        let vocab: Vec<&str> = model.vocabulary.keys().map(String::as_str).collect();
        assert_eq!(vocab, ["ww", "zz"]);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            tfidf_fit_transform(&ids(1), &["aa"], 8),
            Err(VectorError::MaxFeatures { .. })
        ));
        assert_eq!(
            tfidf_fit_transform(&ids(1), &["a b !"], 16).unwrap_err(),
            VectorError::EmptyVocabulary
        );
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(VectorError::ZeroVector));
    }

    struct Len;
    impl Embedder for Len {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
            Ok(texts.iter().map(|t| vec![t.len() as f64, 1.0, 0.0, 2.0]).collect())
        }
    }

    #[test]
    fn embedding_shapes_and_order() {
        let texts: Vec<String> = ["a", "bbb", "a"].iter().map(|s| s.to_string()).collect();
        let m = embed_corpus(&ids(3), &texts, &Len, 2).unwrap();
        let d = m.to_dense();
        assert_eq!((d.rows(), d.cols()), (3, 4));
        assert_eq!(d.row(1)[0], 3.0);
        assert_eq!(d.row(0), d.row(2));
        let empty = embed_corpus(&[], &[], &Len, 2).unwrap();
        assert!(empty.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn tfidf_rows_have_unit_norm(words in proptest::collection::vec("[a-e]{2,3}", 1..30)) {
            let text = words.join(" ");
            let (_, m) = tfidf_fit_transform(&ids(2), &[text.as_str(), "aa bb"], 16).unwrap();
            let d = m.to_dense();
            for i in 0..2 {
                proptest::prop_assert!((norm(d.row(i)) - 1.0).abs() < 1e-9);
            }
            proptest::prop_assert!(m.dim() <= 16);
        }

        #[test]
        fn cosine_symmetric(a in proptest::collection::vec(-5.0f64..5.0, 4), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
            proptest::prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let ab = cosine_similarity(&a, &b).unwrap();
            proptest::prop_assert!((ab - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            proptest::prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
