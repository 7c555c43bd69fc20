//! Parsing of model answers, the match metrics, and the chain-of-thought
//! labeling baseline that needs no fine-tuning.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::LabelCatalog;
use crate::cluster::{nearest_clusters, ClusterModel};
use crate::corpus::{Corpus, LabelScheme, Split};
use crate::landmark::LandmarkSet;
use crate::llm::{ChatModel, ChatRequest};
use crate::prompts::{cot_prompt, LabeledRef};
use crate::text::normalize_label;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for unknown document `{0}`")]
    UnknownId(String),
    #[error("more than one prediction for `{0}`")]
    DuplicateId(String),
    #[error("no gold documents to score against")]
    NoGold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub raw: String,
    pub labels: Vec<String>,
    pub parse_ok: bool,
}

/// Line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub output: String,
}

/// Labels between the first `[` and the next `]`, comma-split and
/// normalized. No bracket pair or nothing inside means `parse_ok = false`.
pub fn parse_prediction(id: &str, raw: &str) -> Prediction {
    let labels: Vec<String> = raw
        .find('[')
        .and_then(|open| {
            let rest = &raw[open + 1..];
            rest.find(']').map(|close| &rest[..close])
        })
        .map(|inner| {
            inner
                .split(',')
                .map(normalize_label)
                .filter(|l| !l.is_empty())
                .collect()
        })
        .unwrap_or_default();
    Prediction {
        id: id.into(),
        raw: raw.into(),
        parse_ok: !labels.is_empty(),
        labels,
    }
}

fn canon_set(xs: &[String]) -> BTreeSet<String> {
    xs.iter().map(|x| normalize_label(x)).collect()
}

/// At least one predicted label is a gold label.
pub fn part_match(pred: &[String], gold: &[String]) -> bool {
    let g = canon_set(gold);
    pred.iter().any(|p| g.contains(&normalize_label(p)))
}

/// Same label sets.
pub fn all_match(pred: &[String], gold: &[String]) -> bool {
    !pred.is_empty() && canon_set(pred) == canon_set(gold)
}

/// Same labels in the same order.
pub fn in_right_order(pred: &[String], gold: &[String]) -> bool {
    !pred.is_empty()
        && pred.len() == gold.len()
        && pred.iter().zip(gold).all(|(p, g)| normalize_label(p) == normalize_label(g))
}

/// (domain, area): the first labels agree; the area also needs the second
/// labels to agree.
pub fn domain_area_match(pred: &[String], gold: &[String]) -> (bool, bool) {
    let same = |i: usize| match (pred.get(i), gold.get(i)) {
        (Some(p), Some(g)) => normalize_label(p) == normalize_label(g),
        _ => false,
    };
    let domain = same(0);
    (domain, domain && same(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: LabelScheme,
    /// Gold documents scored; missing predictions count as misses.
    pub n: usize,
    pub predicted: usize,
    pub parse_failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_right_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_match: Option<f64>,
}

impl MetricsReport {
    pub fn to_markdown(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{:.2}%", x * 100.0));
        match self.scheme {
            LabelScheme::MultiLabel => format!(
                "| N | Part Match | All Match | In Right Order |\n|---:|---:|---:|---:|\n| {} | {} | {} | {} |\n",
                self.n,
                pct(self.part_match),
                pct(self.all_match),
                pct(self.in_right_order)
            ),
            LabelScheme::Hierarchical2 => format!(
                "| N | Domain Match | Area Match |\n|---:|---:|---:|\n| {} | {} | {} |\n",
                self.n,
                pct(self.domain_match),
                pct(self.area_match)
            ),
        }
    }
}

/// Scores predictions against `gold` (id, labels) pairs. Every prediction id
/// must be a gold id and appear once.
pub fn score_against(rows: &[PredictionRow], gold: &[(String, Vec<String>)], scheme: LabelScheme) -> Result<MetricsReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::NoGold);
    }
    let index: BTreeMap<&str, &[String]> = gold.iter().map(|(id, l)| (id.as_str(), l.as_slice())).collect();
    let mut preds: BTreeMap<&str, Prediction> = BTreeMap::new();
    for r in rows {
        if !index.contains_key(r.id.as_str()) {
            return Err(EvalError::UnknownId(r.id.clone()));
        }
        if preds.insert(&r.id, parse_prediction(&r.id, &r.output)).is_some() {
            return Err(EvalError::DuplicateId(r.id.clone()));
        }
    }
    let (mut part, mut all, mut order, mut dom, mut area) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (id, g) in &index {
        let Some(p) = preds.get(id) else { continue };
        let l = &p.labels;
        part += usize::from(part_match(l, g));
        all += usize::from(all_match(l, g));
        order += usize::from(in_right_order(l, g));
        let (d, a) = domain_area_match(l, g);
        dom += usize::from(d);
        area += usize::from(a);
    }
    let n = index.len();
    let frac = |c: usize| Some(c as f64 / n as f64);
    let multi = scheme == LabelScheme::MultiLabel;
    Ok(MetricsReport {
        scheme,
        n,
        predicted: preds.len(),
        parse_failures: preds.values().filter(|p| !p.parse_ok).count(),
        part_match: if multi { frac(part) } else { None },
        all_match: if multi { frac(all) } else { None },
        in_right_order: if multi { frac(order) } else { None },
        domain_match: if multi { None } else { frac(dom) },
        area_match: if multi { None } else { frac(area) },
    })
}

/// Scores against the corpus test split.
pub fn score_run(rows: &[PredictionRow], corpus: &Corpus, scheme: LabelScheme) -> Result<MetricsReport, EvalError> {
    let gold: Vec<(String, Vec<String>)> = corpus
        .split(Split::Test)
        .map(|d| (d.id.clone(), d.reveal_gold().to_vec()))
        .collect();
    score_against(rows, &gold, scheme)
}

/// Bracketed labels after the last `Label:` marker of a reasoning answer.
pub fn extract_cot_label(id: &str, raw: &str) -> Prediction {
    let lower = raw.to_ascii_lowercase();
    let tail = lower.rfind("label:").map_or("", |i| &raw[i + "label:".len()..]);
    let mut p = parse_prediction(id, tail);
    p.raw = raw.into();
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CotConfig {
    pub temperature: f64,
    pub top_clusters: usize,
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig {
            temperature: 0.0,
            top_clusters: 5,
        }
    }
}

pub struct CotTarget<'a> {
    pub id: &'a str,
    pub text: &'a str,
    /// Feature vector in the clustering space; picks the reference clusters.
    pub features: &'a [f64],
}

/// Labels each target by prompting with the labeled landmarks of its nearest
/// clusters. `pool_texts` is aligned with the model's points. One batch.
pub fn cot_rag_label<C: ChatModel + ?Sized>(
    targets: &[CotTarget<'_>],
    model: &ClusterModel,
    landmarks: &LandmarkSet,
    pool_texts: &[&str],
    catalog: &LabelCatalog,
    chat: &C,
    cfg: &CotConfig,
) -> Vec<Prediction> {
    let listing = catalog.prompt_listing();
    let reqs: Vec<ChatRequest> = targets
        .iter()
        .map(|t| {
            let refs: Vec<(&str, Vec<String>)> = nearest_clusters(model, t.features, cfg.top_clusters)
                .into_iter()
                .filter_map(|c| landmarks.labeled_for_cluster(c))
                .filter_map(|e| {
                    let shown = e
                        .labels
                        .iter()
                        .map(|l| catalog.display(l).map_or_else(|| l.clone(), ToString::to_string))
                        .collect();
                    pool_texts.get(e.doc_index).map(|text| (*text, shown))
                })
                .collect();
            let labeled: Vec<LabeledRef<'_>> = refs.iter().map(|(text, labels)| LabeledRef { text, labels }).collect();
            ChatRequest::user(chat.model_name(), cot_prompt(&listing, &labeled, t.text), cfg.temperature)
        })
        .collect();
    targets
        .iter()
        .zip(chat.chat_batch(&reqs))
        .map(|(t, answer)| match answer {
            Ok(raw) => extract_cot_label(t.id, &raw),
            Err(e) => Prediction {
                id: t.id.into(),
                raw: e.to_string(),
                labels: Vec::new(),
                parse_ok: false,
            },
        })
        .collect()
}

/// The predictions-file line for a parsed prediction: the bracket list when
/// parsing worked, otherwise the raw answer.
pub fn prediction_row(p: &Prediction) -> PredictionRow {
    PredictionRow {
        id: p.id.clone(),
        output: if p.parse_ok { format!("[{}]", p.labels.join(", ")) } else { p.raw.clone() },
    }
}
