//! Reports on generated data: vocabulary overlap among variants, similarity
//! to the source, label distribution and length statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::augment::{AugmentedSample, ExtractionStatus, Method};
use crate::catalog::LabelCatalog;
use crate::llm::{Embedder, LlmError};
use crate::text::{normalize_label, token_set, word_count};
use crate::vectorize::cosine_similarity;

/// |A ∩ B| / |A ∪ B|; two empty sets count as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean Jaccard over all unordered pairs of `texts`, `None` for fewer than two.
pub fn mean_pairwise_jaccard(texts: &[&str]) -> Option<f64> {
    if texts.len() < 2 {
        return None;
    }
    let sets: Vec<BTreeSet<String>> = texts.iter().map(|t| token_set(t)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            total += jaccard(&sets[i], &sets[j]);
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub method: Method,
    pub sources: usize,
    pub variants: usize,
    /// Per-source mean over variant pairs, then averaged over sources.
    pub mean_jaccard: Option<f64>,
    /// Per-source mean cosine between source and variant embeddings, then
    /// averaged over sources.
    pub mean_cosine: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// One report per method present among the successful samples. `originals`
/// maps source ids to their text; the cosine column needs an embedder.
pub fn diversity_report(
    samples: &[AugmentedSample],
    originals: &BTreeMap<String, String>,
    embedder: Option<&dyn Embedder>,
) -> Result<Vec<DiversityReport>, LlmError> {
    let mut groups: BTreeMap<(Method, &str), Vec<&str>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.is_ok()) {
        groups.entry((s.method, s.source_id.as_str())).or_default().push(&s.text);
    }
    let mut out = Vec::new();
    for method in Method::ALL {
        let mine: Vec<(&str, &Vec<&str>)> = groups
            .iter()
            .filter(|((m, _), _)| *m == method)
            .map(|((_, src), v)| (*src, v))
            .collect();
        if mine.is_empty() {
            continue;
        }
        let jac: Vec<f64> = mine.iter().filter_map(|(_, v)| mean_pairwise_jaccard(v)).collect();
        let mut cos = Vec::new();
        if let Some(emb) = embedder {
            for (src, variants) in &mine {
                let Some(orig) = originals.get(*src) else { continue };
                let mut batch: Vec<String> = Vec::with_capacity(variants.len() + 1);
                batch.push(orig.clone());
                batch.extend(variants.iter().map(|t| String::from(*t)));
                let vecs = emb.embed(&batch)?;
                let sims: Vec<f64> = vecs[1..]
                    .iter()
                    .filter_map(|v| cosine_similarity(&vecs[0], v).ok())
                    .collect();
                if let Some(m) = mean(&sims) {
                    cos.push(m);
                }
            }
        }
        out.push(DiversityReport {
            method,
            sources: mine.len(),
            variants: mine.iter().map(|(_, v)| v.len()).sum(),
            mean_jaccard: mean(&jac),
            mean_cosine: mean(&cos),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub in_catalog: bool,
    pub before: usize,
    pub augmented: usize,
    pub after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistributionReport {
    /// Catalog labels first in catalog order, then generated labels outside
    /// the catalog alphabetically.
    pub rows: Vec<LabelCount>,
    /// Distinct generated labels that are not in the catalog.
    pub outside_catalog: usize,
    /// Samples considered (those with extracted labels).
    pub samples: usize,
    /// Share of those samples carrying at least one catalog label.
    pub share_with_catalog_label: Option<f64>,
    /// Catalog labels that received fewer augmented samples than they had
    /// originals.
    pub under_augmented: Vec<String>,
}

/// Label counts before and after augmentation. Every extracted label counts,
/// including ones a label policy dropped.
pub fn label_distribution_report(
    original_labels: &[&[String]],
    samples: &[AugmentedSample],
    catalog: &LabelCatalog,
) -> LabelDistributionReport {
    let mut before: BTreeMap<String, usize> = BTreeMap::new();
    for labels in original_labels {
        for l in *labels {
            *before.entry(normalize_label(l)).or_default() += 1;
        }
    }
    let mut augmented: BTreeMap<String, usize> = BTreeMap::new();
    let mut considered = 0usize;
    let mut with_catalog = 0usize;
    for s in samples
        .iter()
        .filter(|s| matches!(s.status, ExtractionStatus::Ok | ExtractionStatus::LabelFiltered))
    {
        considered += 1;
        let mut hit = false;
        for l in s.all_labels() {
            let l = normalize_label(l);
            hit |= catalog.contains(&l);
            *augmented.entry(l).or_default() += 1;
        }
        with_catalog += usize::from(hit);
    }
    let row = |label: &str, in_catalog: bool| {
        let b = before.get(label).copied().unwrap_or(0);
        let a = augmented.get(label).copied().unwrap_or(0);
        LabelCount {
            label: label.into(),
            in_catalog,
            before: b,
            augmented: a,
            after: b + a,
        }
    };
    let mut rows: Vec<LabelCount> = catalog.canonical_labels().map(|l| row(l, true)).collect();
    let extra: BTreeSet<&String> = before
        .keys()
        .chain(augmented.keys())
        .filter(|l| !catalog.contains(l))
        .collect();
    let outside_catalog = augmented.keys().filter(|l| !catalog.contains(l)).count();
    rows.extend(extra.into_iter().map(|l| row(l, false)));
    let under_augmented = rows
        .iter()
        .filter(|r| r.in_catalog && r.augmented < r.before)
        .map(|r| r.label.clone())
        .collect();
    LabelDistributionReport {
        rows,
        outside_catalog,
        samples: considered,
        share_with_catalog_label: (considered > 0).then(|| with_catalog as f64 / considered as f64),
        under_augmented,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub documents: usize,
    pub mean_words: f64,
    pub mean_chars_per_word: f64,
    /// Standard error of `mean_chars_per_word`.
    pub se_chars_per_word: f64,
}

fn length_stats(texts: &[&str]) -> LengthStats {
    let words: Vec<usize> = texts.iter().map(|t| word_count(t)).collect();
    let cpw: Vec<f64> = texts
        .iter()
        .zip(&words)
        .filter(|(_, &w)| w > 0)
        .map(|(t, &w)| t.chars().filter(|c| !c.is_whitespace()).count() as f64 / w as f64)
        .collect();
    let n = cpw.len() as f64;
    let m = mean(&cpw).unwrap_or(0.0);
    let se = if cpw.len() > 1 {
        let var = cpw.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var / n)
    } else {
        0.0
    };
    LengthStats {
        documents: texts.len(),
        mean_words: if texts.is_empty() { 0.0 } else { words.iter().sum::<usize>() as f64 / texts.len() as f64 },
        mean_chars_per_word: m,
        se_chars_per_word: se,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthReport {
    pub original: LengthStats,
    pub augmented: LengthStats,
    /// augmented minus original mean characters per word.
    pub chars_per_word_delta: f64,
    pub delta_se: f64,
    /// Delta relative to the original mean, when that is non-zero.
    pub relative_delta: Option<f64>,
}

pub fn length_report(original: &[&str], augmented: &[&str]) -> LengthReport {
    let o = length_stats(original);
    let a = length_stats(augmented);
    let delta = a.mean_chars_per_word - o.mean_chars_per_word;
    LengthReport {
        original: o,
        augmented: a,
        chars_per_word_delta: delta,
        delta_se: libm::sqrt(o.se_chars_per_word * o.se_chars_per_word + a.se_chars_per_word * a.se_chars_per_word),
        relative_delta: (o.mean_chars_per_word > 0.0).then(|| delta / o.mean_chars_per_word),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

pub fn diversity_markdown(rows: &[DiversityReport]) -> String {
    let mut s = String::from("| Method | Sources | Variants | Jaccard among generated | Cosine original-generated |\n|---|---:|---:|---:|---:|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            r.method,
            r.sources,
            r.variants,
            opt(r.mean_jaccard),
            opt(r.mean_cosine)
        ));
    }
    s
}

pub fn diversity_csv(rows: &[DiversityReport]) -> String {
    let mut s = String::from("method,sources,variants,mean_jaccard,mean_cosine\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.method, r.sources, r.variants, opt(r.mean_jaccard), opt(r.mean_cosine)));
    }
    s
}

pub fn label_distribution_csv(r: &LabelDistributionReport) -> String {
    let mut s = String::from("label,in_catalog,before,augmented,after\n");
    for row in &r.rows {
        let label = if row.label.contains(',') || row.label.contains('"') {
            format!("\"{}\"", row.label.replace('"', "\"\""))
        } else {
            row.label.clone()
        };
        s.push_str(&format!("{},{},{},{},{}\n", label, row.in_catalog, row.before, row.augmented, row.after));
    }
    s
}

pub fn length_markdown(r: &LengthReport) -> String {
    format!(
        "| Group | Documents | Mean words | Chars per word | SE |\n|---|---:|---:|---:|---:|\n\
         | original | {} | {:.1} | {:.4} | {:.4} |\n\
         | augmented | {} | {:.1} | {:.4} | {:.4} |\n\n\
         Chars-per-word delta: {:.4} (SE {:.4}){}\n",
        r.original.documents,
        r.original.mean_words,
        r.original.mean_chars_per_word,
        r.original.se_chars_per_word,
        r.augmented.documents,
        r.augmented.mean_words,
        r.augmented.mean_chars_per_word,
        r.augmented.se_chars_per_word,
        r.chars_per_word_delta,
        r.delta_se,
        r.relative_delta.map_or_else(String::new, |x| format!(", {:+.2}%", x * 100.0)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"])), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"])), 0.0);
        assert!((jaccard(&set(&["a", "b"]), &set(&["b", "c"])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
    }

    fn sample(method: Method, src: &str, v: usize, text: &str) -> AugmentedSample {
        AugmentedSample {
            id: format!("{method}:{src}:{v}"),
            method,
            source_id: src.into(),
            text: text.into(),
            labels: vec!["earn".into()],
            status: ExtractionStatus::Ok,
            prompt_hash: None,
            variant: v,
            dropped_labels: vec![],
            error: None,
        }
    }

    #[test]
    fn macro_average_by_hand() {
        // source a: {x y} vs {x z} -> 1/3; source b: identical -> 1
        let samples = vec![
            sample(Method::Rewrite, "a", 0, "x y"),
            sample(Method::Rewrite, "a", 1, "x z"),
            sample(Method::Rewrite, "b", 0, "p q"),
            sample(Method::Rewrite, "b", 1, "Q, p"),
        ];
        let r = diversity_report(&samples, &BTreeMap::new(), None).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0].mean_jaccard.unwrap() - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert_eq!(r[0].mean_cosine, None);
    }

    #[test]
    fn label_distribution_identity_without_augmentation() {
        let cat = LabelCatalog::reuters();
        let a = vec!["earn".to_string()];
        let b = vec!["earn".to_string(), "corn".to_string()];
        let r = label_distribution_report(&[&a, &b], &[], &cat);
        for row in &r.rows {
            assert_eq!(row.after, row.before);
        }
        assert_eq!(r.rows.iter().find(|x| x.label == "earn").unwrap().before, 2);
        assert_eq!(r.share_with_catalog_label, None);
    }

    #[test]
    fn label_distribution_counts_hallucinations() {
        let cat = LabelCatalog::reuters();
        let a = vec!["earn".to_string()];
        let mut s1 = sample(Method::Rag, "a", 0, "t");
        s1.labels = vec!["earn".into()];
        s1.dropped_labels = vec!["bonus".into()];
        let mut s2 = sample(Method::Rag, "a", 1, "t");
        s2.labels = vec![];
        s2.dropped_labels = vec!["bonus".into()];
        s2.status = ExtractionStatus::LabelFiltered;
        let r = label_distribution_report(&[&a, &a], &[s1, s2], &cat);
        assert_eq!(r.outside_catalog, 1);
        assert_eq!(r.share_with_catalog_label, Some(0.5));
        assert!(r.under_augmented.contains(&"earn".to_string()));
        let bonus = r.rows.iter().find(|x| x.label == "bonus").unwrap();
        assert_eq!((bonus.in_catalog, bonus.augmented), (false, 2));
    }

    #[test]
    fn identical_corpora_have_zero_delta() {
        let docs = ["one two three", "four five"];
        let r = length_report(&docs, &docs);
        assert_eq!(r.chars_per_word_delta, 0.0);
        assert_eq!(r.original.mean_words, 2.5);
    }
}
