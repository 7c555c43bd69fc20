//! Stage orchestration. Each stage writes into `{output_dir}/{stage}-{key}`
//! where the key hashes the stage's config, input files and upstream keys, so
//! a finished stage with unchanged inputs is skipped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use synthlabel_core::augment::{
    llm_rewrite, rag_generate, wordnet_replace, AugmentStats, AugmentedSample, Method, RagConfig, RagContext,
    RewriteConfig, Source, SynonymDb, WordnetConfig,
};
use synthlabel_core::catalog::LabelCatalog;
use synthlabel_core::cluster::ClusterModel;
use synthlabel_core::corpus::{split_corpus, Corpus, Split};
use synthlabel_core::diagnostics::{
    diversity_csv, diversity_markdown, diversity_report, label_distribution_csv, label_distribution_report,
    length_markdown, length_report,
};
use synthlabel_core::emit::{
    build_predict_prompt, combine_datasets, records_from_landmarks, records_from_samples, DatasetPart,
    FineTuneRecord,
};
use synthlabel_core::evaluate::{cot_rag_label, prediction_row, score_run, CotConfig, CotTarget, PredictionRow};
use synthlabel_core::landmark::{select_landmarks, LabelRow, LandmarkSet, LlmSelectConfig, SelectionStrategy};
use synthlabel_core::llm::{ChatModel, Embedder};
use synthlabel_core::matrix::DenseMatrix;
use synthlabel_core::metrics::{reports_to_csv, reports_to_markdown, silhouette, sweep, SweepFeatures, SweepPlan};
use synthlabel_core::vectorize::{embed_corpus, tfidf_fit_transform, FeatureKind, FeatureMatrix, Rows, TfidfModel};

use crate::config::{spec_for, AnnotateMode, FeatureSpec, LlmMode, PipelineConfig, StrategyKind};
use crate::gateway::{Gateway, GatewayStats};
use crate::io::{
    self, corpus_to_jsonl, read_json, read_jsonl, resolve_catalog, write_atomic, write_catalog, write_json,
    write_jsonl, CorpusFormat, EmbeddingCache, TestPrompt,
};
use crate::mock::MockServer;
use crate::user_error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Features,
    Cluster,
    Metrics,
    Landmarks,
    Annotate,
    Augment,
    Diagnose,
    Emit,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Features,
        Stage::Cluster,
        Stage::Metrics,
        Stage::Landmarks,
        Stage::Annotate,
        Stage::Augment,
        Stage::Diagnose,
        Stage::Emit,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Cluster => "cluster",
            Stage::Metrics => "metrics",
            Stage::Landmarks => "landmarks",
            Stage::Annotate => "annotate",
            Stage::Augment => "augment",
            Stage::Diagnose => "diagnose",
            Stage::Emit => "emit",
            Stage::Evaluate => "evaluate",
        }
    }

    /// CLI command that produces this stage.
    pub fn command(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Cluster => "cluster fit",
            Stage::Metrics => "metrics",
            Stage::Landmarks => "landmark select",
            Stage::Annotate => "landmark annotate",
            Stage::Augment => "augment",
            Stage::Diagnose => "diagnose",
            Stage::Emit => "emit",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const DONE_FILE: &str = "stage.json";
pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub key: String,
    pub upstream: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub dir: PathBuf,
    pub cached: bool,
}

/// Stored feature stage output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureArtifact {
    pub spec: String,
    pub matrix: FeatureMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tfidf: Option<TfidfModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub algorithm: String,
    pub k: usize,
    pub pool: usize,
    pub sizes: Vec<usize>,
    pub empty_clusters: usize,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub stats: BTreeMap<String, AugmentStats>,
    pub sources: usize,
    pub pool: usize,
    pub warnings: Vec<String>,
}

struct Llm {
    gateway: Gateway,
    _mock: Option<MockServer>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    llm: Option<Llm>,
    /// Interactive annotation input; stdin when unset.
    pub annotate_io: Option<(Box<dyn std::io::BufRead>, Box<dyn std::io::Write>)>,
}

fn sha_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).map_err(|e| user_error(format!("{}: {e}", path.display())))?;
    Ok(sha_hex(&bytes))
}

fn stage_error(stage: Stage, e: impl std::fmt::Display) -> anyhow::Error {
    user_error(format!("{stage}: {e}"))
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline {
            cfg,
            llm: None,
            annotate_io: None,
        }
    }

    pub fn gateway_stats(&self) -> Option<GatewayStats> {
        self.llm.as_ref().map(|l| l.gateway.stats())
    }

    fn llm(&mut self) -> anyhow::Result<&Gateway> {
        if self.llm.is_none() {
            let mut gcfg = self.cfg.llm.gateway_config();
            let mock = if self.cfg.llm.mode == LlmMode::Mock {
                let server = MockServer::start(self.cfg.llm.mock.clone(), "127.0.0.1:0").context("starting the mock LLM server")?;
                gcfg.base_url = server.base_url();
                gcfg.embed_base_url = server.base_url();
                gcfg.api_key = None;
                gcfg.embed_api_key = None;
                Some(server)
            } else {
                None
            };
            let gateway = Gateway::new(gcfg)?;
            self.llm = Some(Llm { gateway, _mock: mock });
        }
        Ok(&self.llm.as_ref().expect("just set").gateway)
    }

    fn llm_identity(&self) -> Value {
        let l = &self.cfg.llm;
        json!({
            "mode": l.mode,
            "chat_model": l.chat_model,
            "embed_model": l.embed_model,
            "mock": if l.mode == LlmMode::Mock { serde_json::to_value(&l.mock).expect("serializable") } else { Value::Null },
        })
    }

    pub fn upstream(&self, stage: Stage) -> Vec<Stage> {
        match stage {
            Stage::Ingest => vec![],
            Stage::Features => vec![Stage::Ingest],
            Stage::Cluster => vec![Stage::Features],
            Stage::Metrics => vec![Stage::Features],
            Stage::Landmarks => vec![Stage::Cluster],
            Stage::Annotate => vec![Stage::Landmarks],
            Stage::Augment => vec![Stage::Annotate],
            Stage::Diagnose => vec![Stage::Augment],
            Stage::Emit => vec![Stage::Augment],
            Stage::Evaluate => {
                if self.cfg.evaluate.predictions.is_some() && !self.cfg.evaluate.cot_rag {
                    vec![Stage::Ingest]
                } else {
                    vec![Stage::Emit]
                }
            }
        }
    }

    fn params(&self, stage: Stage) -> anyhow::Result<Value> {
        let c = &self.cfg;
        Ok(match stage {
            Stage::Ingest => {
                let catalog = match c.corpus.catalog.as_str() {
                    "reuters" | "wos" => json!(c.corpus.catalog),
                    p => json!(file_digest(Path::new(p))?),
                };
                json!({
                    "corpus": file_digest(&c.corpus.path)?,
                    "format": c.corpus.format,
                    "name": c.corpus.name,
                    "scheme": c.corpus.scheme,
                    "catalog": catalog,
                    "split": c.corpus.split,
                    "split_seed": c.corpus.split_seed,
                })
            }
            Stage::Features => {
                let spec = c.features.parsed().map_err(user_error)?;
                json!({
                    "spec": spec.to_string(),
                    "embed": if spec == FeatureSpec::Embedding { self.llm_identity() } else { Value::Null },
                })
            }
            Stage::Cluster => serde_json::to_value(&c.cluster)?,
            Stage::Metrics => json!({"metrics": c.metrics, "cluster": c.cluster}),
            Stage::Landmarks => json!({
                "landmarks": c.landmarks,
                "strategy": self.cfg.strategy(),
                "llm": if c.landmarks.strategy == StrategyKind::LlmChoice { self.llm_identity() } else { Value::Null },
            }),
            Stage::Annotate => json!({
                "mode": c.annotate.mode,
                "annotator": c.annotate.annotator,
                "labels": match (&c.annotate.mode, &c.annotate.labels) {
                    (AnnotateMode::Import, Some(p)) => json!(file_digest(p)?),
                    _ => Value::Null,
                },
            }),
            Stage::Augment => json!({
                "augment": c.augment,
                "synonyms": match &c.augment.wordnet.synonyms {
                    Some(p) if c.augment.wordnet.enabled => json!(file_digest(p)?),
                    _ => Value::Null,
                },
                "llm": self.llm_identity(),
            }),
            Stage::Diagnose => json!({
                "diagnose": c.diagnose,
                "llm": if c.diagnose.embed_similarity { self.llm_identity() } else { Value::Null },
            }),
            Stage::Emit => serde_json::to_value(&c.emit)?,
            Stage::Evaluate => json!({
                "cot_rag": c.evaluate.cot_rag,
                "cot_temperature": c.evaluate.cot_temperature,
                "cot_top_clusters": c.evaluate.cot_top_clusters,
                "predictions": match &c.evaluate.predictions {
                    Some(p) => json!(file_digest(p)?),
                    None => Value::Null,
                },
                "llm": if c.evaluate.cot_rag { self.llm_identity() } else { Value::Null },
            }),
        })
    }

    pub fn key(&self, stage: Stage) -> anyhow::Result<String> {
        let upstream: Vec<String> = self
            .upstream(stage)
            .into_iter()
            .map(|u| self.key(u))
            .collect::<anyhow::Result<_>>()?;
        let doc = json!({"stage": stage, "params": self.params(stage)?, "upstream": upstream});
        Ok(sha_hex(serde_json::to_string(&doc)?.as_bytes()))
    }

    pub fn stage_dir(&self, stage: Stage) -> anyhow::Result<PathBuf> {
        let key = self.key(stage)?;
        Ok(self.cfg.run.output_dir.join(format!("{stage}-{}", &key[..12])))
    }

    pub fn is_done(&self, stage: Stage) -> anyhow::Result<bool> {
        Ok(self.stage_dir(stage)?.join(DONE_FILE).exists())
    }

    fn done_dir(&self, stage: Stage) -> anyhow::Result<PathBuf> {
        let dir = self.stage_dir(stage)?;
        if !dir.join(DONE_FILE).exists() {
            return Err(user_error(format!(
                "missing upstream artifact: stage `{stage}` has not run for this configuration (run `synthlabel {}` first)",
                stage.command()
            )));
        }
        Ok(dir)
    }

    /// Runs one stage. Upstream stages must already be complete.
    pub fn run_stage(&mut self, stage: Stage) -> anyhow::Result<StageOutcome> {
        if stage == Stage::Evaluate && self.cfg.evaluate.predictions.is_none() && !self.cfg.evaluate.cot_rag {
            return Err(user_error(
                "evaluate needs an external predictions file (evaluate.predictions or --predictions) or cot_rag = true",
            ));
        }
        let upstream: Vec<PathBuf> = self
            .upstream(stage)
            .into_iter()
            .map(|u| self.done_dir(u))
            .collect::<anyhow::Result<_>>()?;
        let key = self.key(stage)?;
        let dir = self.stage_dir(stage)?;
        if dir.join(DONE_FILE).exists() {
            log::info!("cache hit: {stage} already complete in {}", dir.display());
            eprintln!("cache hit: {stage} already complete in {}", dir.display());
            return Ok(StageOutcome { stage, dir, cached: true });
        }
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_atomic(&dir.join(SNAPSHOT_FILE), self.cfg.to_toml().as_bytes())?;
        match stage {
            Stage::Ingest => self.ingest(&dir)?,
            Stage::Features => self.features(&dir)?,
            Stage::Cluster => self.cluster(&dir)?,
            Stage::Metrics => self.metrics(&dir)?,
            Stage::Landmarks => self.landmarks(&dir)?,
            Stage::Annotate => self.annotate(&dir)?,
            Stage::Augment => self.augment(&dir)?,
            Stage::Diagnose => self.diagnose(&dir)?,
            Stage::Emit => self.emit(&dir)?,
            Stage::Evaluate => self.evaluate(&dir)?,
        }
        let record = StageRecord {
            stage,
            key,
            upstream: upstream.iter().map(|p| p.display().to_string()).collect(),
        };
        write_json(&dir.join(DONE_FILE), &record)?;
        eprintln!("{stage}: done -> {}", dir.display());
        Ok(StageOutcome { stage, dir, cached: false })
    }

    /// Runs `stage` after making sure everything upstream has run.
    pub fn run_through(&mut self, stage: Stage) -> anyhow::Result<Vec<StageOutcome>> {
        let mut order = Vec::new();
        self.collect_order(stage, &mut order);
        order.into_iter().map(|s| self.run_stage(s)).collect()
    }

    fn collect_order(&self, stage: Stage, order: &mut Vec<Stage>) {
        for u in self.upstream(stage) {
            self.collect_order(u, order);
        }
        if !order.contains(&stage) {
            order.push(stage);
        }
    }

    /// The whole pipeline; evaluate only when it has something to score.
    pub fn run_all(&mut self) -> anyhow::Result<Vec<StageOutcome>> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Evaluate && self.cfg.evaluate.predictions.is_none() && !self.cfg.evaluate.cot_rag {
                continue;
            }
            if out.iter().any(|o: &StageOutcome| o.stage == stage) {
                continue;
            }
            out.push(self.run_stage(stage)?);
        }
        Ok(out)
    }

    // -------------------------------------------------------------- loaders

    pub fn load_corpus(&self) -> anyhow::Result<(Corpus, LabelCatalog)> {
        let dir = self.done_dir(Stage::Ingest)?;
        let corpus: Corpus = read_json(&dir.join("corpus.json"))?;
        let catalog = io::load_catalog(&dir.join("catalog.json"))?;
        Ok((corpus, catalog))
    }

    pub fn load_features(&self) -> anyhow::Result<FeatureArtifact> {
        Ok(read_json(&self.done_dir(Stage::Features)?.join("features.json"))?)
    }

    pub fn load_model(&self) -> anyhow::Result<ClusterModel> {
        Ok(read_json(&self.done_dir(Stage::Cluster)?.join("model.json"))?)
    }

    pub fn load_landmarks(&self, stage: Stage) -> anyhow::Result<LandmarkSet> {
        Ok(read_json(&self.done_dir(stage)?.join("landmarks.json"))?)
    }

    pub fn load_samples(&self) -> anyhow::Result<Vec<AugmentedSample>> {
        let dir = self.done_dir(Stage::Augment)?;
        let mut all = Vec::new();
        for m in Method::ALL {
            let p = dir.join(format!("{}.jsonl", m.as_str()));
            if p.exists() {
                all.extend(read_jsonl::<AugmentedSample>(&p)?);
            }
        }
        Ok(all)
    }

    /// Train-split documents in corpus order: the clustered pool.
    fn pool(corpus: &Corpus) -> Vec<&synthlabel_core::corpus::Document> {
        corpus.split(Split::Train).collect()
    }

    fn dense_subset(features: &FeatureMatrix, ids: &[String]) -> anyhow::Result<DenseMatrix> {
        let want: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        let sub = features.subset(|id| want.contains(id));
        if sub.doc_ids != ids {
            anyhow::bail!("feature rows do not line up with the requested documents");
        }
        Ok(sub.to_dense())
    }

    // --------------------------------------------------------------- stages

    fn ingest(&mut self, dir: &Path) -> anyhow::Result<()> {
        let c = &self.cfg.corpus;
        let format = c
            .format
            .or_else(|| CorpusFormat::from_path(&c.path))
            .unwrap_or(CorpusFormat::Jsonl);
        let corpus = io::load_corpus(&c.path, format, &c.name, c.scheme).map_err(|e| stage_error(Stage::Ingest, e))?;
        let catalog = resolve_catalog(&c.catalog, Path::new("")).map_err(|e| stage_error(Stage::Ingest, e))?;
        for d in corpus.documents() {
            let gold = d.reveal_gold();
            if !gold.is_empty() {
                if let Some(bad) = gold.iter().find(|l| !catalog.contains(l)) {
                    return Err(stage_error(Stage::Ingest, format!("document `{}` has label `{bad}` outside the catalog", d.id)));
                }
            }
        }
        let corpus = split_corpus(corpus, self.cfg.split_ratios(), c.split_seed).map_err(|e| stage_error(Stage::Ingest, e))?;
        write_json(&dir.join("corpus.json"), &corpus)?;
        write_atomic(&dir.join("corpus.jsonl"), corpus_to_jsonl(&corpus).as_bytes())?;
        write_catalog(&dir.join("catalog.json"), &catalog)?;
        let [tr, va, te] = corpus.split_sizes();
        write_json(
            &dir.join("summary.json"),
            &json!({"documents": corpus.len(), "train": tr, "validation": va, "test": te, "catalog_labels": catalog.len()}),
        )?;
        eprintln!("ingest: {} documents (train {tr}, validation {va}, test {te})", corpus.len());
        Ok(())
    }

    fn features(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, _) = self.load_corpus()?;
        let ids: Vec<String> = corpus.documents().iter().map(|d| d.id.clone()).collect();
        let spec = self.cfg.features.parsed().map_err(user_error)?;
        let artifact = match spec {
            FeatureSpec::Tfidf(max) => {
                let texts: Vec<&str> = corpus.documents().iter().map(|d| d.text.as_str()).collect();
                let (model, matrix) = tfidf_fit_transform(&ids, &texts, max).map_err(|e| stage_error(Stage::Features, e))?;
                FeatureArtifact {
                    spec: spec.to_string(),
                    matrix,
                    tfidf: Some(model),
                }
            }
            FeatureSpec::Embedding => {
                let cache = EmbeddingCache::new(self.cfg.run.output_dir.join("embeddings"));
                let model_name = self.cfg.llm.embed_model.clone();
                let batch = self.cfg.llm.embed_batch;
                let mut rows: Vec<Option<Vec<f64>>> = ids.iter().map(|id| cache.get(&model_name, id)).collect();
                let missing: Vec<usize> = (0..ids.len()).filter(|&i| rows[i].is_none()).collect();
                if !missing.is_empty() {
                    let gw = self.llm()?;
                    let m_ids: Vec<String> = missing.iter().map(|&i| ids[i].clone()).collect();
                    let m_texts: Vec<String> = missing.iter().map(|&i| corpus.documents()[i].text.clone()).collect();
                    let fm = embed_corpus(&m_ids, &m_texts, gw, batch)?;
                    let dense = fm.to_dense();
                    for (pos, &i) in missing.iter().enumerate() {
                        let v = dense.row(pos).to_vec();
                        cache.put(&model_name, &ids[i], &v)?;
                        rows[i] = Some(v);
                    }
                }
                let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| r.expect("filled")).collect();
                if let Some(bad) = rows.iter().position(|r| r.len() != rows[0].len()) {
                    anyhow::bail!("cached embedding for `{}` has a different dimension; clear the cache", ids[bad]);
                }
                let matrix = FeatureMatrix {
                    doc_ids: ids.clone(),
                    kind: FeatureKind::Embedding,
                    rows: Rows::Dense(DenseMatrix::from_rows(&rows).unwrap_or_else(|| DenseMatrix::zeros(0, 0))),
                };
                matrix.check_finite()?;
                FeatureArtifact {
                    spec: spec.to_string(),
                    matrix,
                    tfidf: None,
                }
            }
        };
        write_json(&dir.join("features.json"), &artifact)?;
        eprintln!("features: {} rows x {} columns ({})", artifact.matrix.len(), artifact.matrix.dim(), artifact.spec);
        Ok(())
    }

    fn cluster(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, _) = self.load_corpus()?;
        let feats = self.load_features()?;
        let pool_ids: Vec<String> = Self::pool(&corpus).iter().map(|d| d.id.clone()).collect();
        let points = Self::dense_subset(&feats.matrix, &pool_ids)?;
        let c = &self.cfg.cluster;
        let model = c.spec().fit(&points, c.k, c.seed).map_err(|e| stage_error(Stage::Cluster, e))?;
        let sizes = model.cluster_sizes();
        let summary = ClusterSummary {
            algorithm: model.algorithm.to_string(),
            k: model.k,
            pool: pool_ids.len(),
            empty_clusters: sizes.iter().filter(|&&s| s == 0).count(),
            sizes,
            converged: model.info.converged,
            iterations: model.info.iterations,
            warnings: model.info.warnings.clone(),
        };
        write_json(&dir.join("model.json"), &model)?;
        write_json(&dir.join("pool.json"), &pool_ids)?;
        write_json(&dir.join("summary.json"), &summary)?;
        eprintln!("cluster: {} with k={} over {} pool documents", summary.algorithm, summary.k, summary.pool);
        Ok(())
    }

    fn metrics(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, _) = self.load_corpus()?;
        let feats = self.load_features()?;
        let val: Vec<_> = corpus
            .split(Split::Validation)
            .filter(|d| !d.reveal_gold().is_empty())
            .collect();
        let ids: Vec<String> = val.iter().map(|d| d.id.clone()).collect();
        let points = Self::dense_subset(&feats.matrix, &ids)?;
        let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
        let gold: Vec<usize> = val
            .iter()
            .map(|d| {
                let n = classes.len();
                *classes.entry(d.reveal_gold()[0].as_str()).or_insert(n)
            })
            .collect();
        let m = &self.cfg.metrics;
        let c = &self.cfg.cluster;
        let plan = SweepPlan {
            features: vec![SweepFeatures {
                name: feats.spec.clone(),
                points: &points,
            }],
            specs: m.algos.iter().map(|&a| spec_for(a, &c.gmm, &c.birch)).collect(),
            ks: if m.ks.is_empty() { vec![c.k] } else { m.ks.clone() },
            seeds: if m.seeds.is_empty() { vec![c.seed] } else { m.seeds.clone() },
            gold: Some(&gold),
            silhouette_sample: m.silhouette_sample,
        };
        let rows = sweep(&plan).map_err(|e| stage_error(Stage::Metrics, e))?;
        write_atomic(&dir.join("sweep.csv"), reports_to_csv(&rows).as_bytes())?;
        write_atomic(&dir.join("sweep.md"), reports_to_markdown(&rows).as_bytes())?;
        write_json(&dir.join("sweep.json"), &rows)?;
        if self.is_done(Stage::Cluster)? {
            let model = self.load_model()?;
            let pool_ids: Vec<String> = Self::pool(&corpus).iter().map(|d| d.id.clone()).collect();
            let pool = Self::dense_subset(&feats.matrix, &pool_ids)?;
            let s = silhouette(&pool, &model.assignments, m.silhouette_sample, c.seed).ok();
            write_json(&dir.join("pool_silhouette.json"), &json!({"silhouette": s}))?;
        }
        eprintln!("metrics: {} sweep rows over {} validation documents", rows.len(), ids.len());
        Ok(())
    }

    fn landmarks(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, _) = self.load_corpus()?;
        let feats = self.load_features()?;
        let model = self.load_model()?;
        let pool = Self::pool(&corpus);
        let ids: Vec<String> = pool.iter().map(|d| d.id.clone()).collect();
        let texts: Vec<&str> = pool.iter().map(|d| d.text.as_str()).collect();
        let points = Self::dense_subset(&feats.matrix, &ids)?;
        let strategy = self.cfg.strategy();
        let sel_cfg = LlmSelectConfig {
            word_cap: self.cfg.landmarks.word_cap,
            token_budget: self.cfg.landmarks.token_budget,
            ..LlmSelectConfig::default()
        };
        let chat: Option<&dyn ChatModel> = if strategy == SelectionStrategy::LlmChoice {
            Some(self.llm()? as &dyn ChatModel)
        } else {
            None
        };
        let sel = select_landmarks(&model, &points, &ids, &texts, strategy, chat, &sel_cfg)
            .map_err(|e| stage_error(Stage::Landmarks, e))?;
        for w in &sel.warnings {
            log::warn!("{w}");
        }
        write_json(&dir.join("landmarks.json"), &sel.set)?;
        write_atomic(&dir.join("warnings.txt"), warnings_text(&sel.warnings).as_bytes())?;
        eprintln!("landmarks: {} selected ({} warnings)", sel.set.len(), sel.warnings.len());
        Ok(())
    }

    fn annotate(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, catalog) = self.load_corpus()?;
        let scheme = corpus.scheme;
        let state = dir.join("landmarks.json");
        let mut set: LandmarkSet = if state.exists() {
            read_json(&state)?
        } else {
            self.load_landmarks(Stage::Landmarks)?
        };
        let mut warnings = Vec::new();
        let a = self.cfg.annotate.clone();
        match a.mode {
            AnnotateMode::RevealGold => {
                for (slot, e) in set.reveal_gold(&corpus, &catalog, scheme) {
                    warnings.push(format!("slot {slot}: {e}"));
                }
            }
            AnnotateMode::Import => {
                let path = a.labels.as_ref().expect("validated");
                let rows: Vec<LabelRow> = read_jsonl(path).map_err(|e| stage_error(Stage::Annotate, e))?;
                for (i, e) in set.import(&rows, &catalog, scheme, &a.annotator) {
                    warnings.push(format!("{}: row {} rejected: {e}", path.display(), i + 1));
                }
            }
            AnnotateMode::Interactive => {
                let text_of = |id: &str| corpus.get(id).map(|d| d.text.clone());
                let persist = |s: &LandmarkSet| -> anyhow::Result<()> { Ok(write_json(&state, s)?) };
                let summary = match self.annotate_io.take() {
                    Some((input, output)) => crate::annotate::annotate_interactive(
                        &mut set, text_of, &catalog, scheme, &a.annotator, input, output, persist,
                    )?,
                    None => {
                        let stdin = std::io::stdin();
                        crate::annotate::annotate_interactive(
                            &mut set,
                            text_of,
                            &catalog,
                            scheme,
                            &a.annotator,
                            stdin.lock(),
                            std::io::stdout(),
                            persist,
                        )?
                    }
                };
                write_json(&state, &set)?;
                if summary.remaining > 0 {
                    return Err(user_error(format!(
                        "{} landmarks still pending; run `synthlabel landmark annotate --interactive` again to resume",
                        summary.remaining
                    )));
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        let labeled = set.labeled().count();
        if labeled == 0 {
            return Err(stage_error(Stage::Annotate, "no landmark received valid labels"));
        }
        write_json(&state, &set)?;
        write_jsonl(&dir.join("labels.jsonl"), &set.to_rows())?;
        write_atomic(&dir.join("warnings.txt"), warnings_text(&warnings).as_bytes())?;
        eprintln!("annotate: {labeled} of {} landmarks labeled", set.len());
        Ok(())
    }

    fn augment(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, catalog) = self.load_corpus()?;
        let model = self.load_model()?;
        let landmarks = self.load_landmarks(Stage::Annotate)?;
        let a = self.cfg.augment.clone();
        let pool = Self::pool(&corpus);
        let ids: Vec<String> = pool.iter().map(|d| d.id.clone()).collect();
        let texts: Vec<&str> = pool.iter().map(|d| d.text.as_str()).collect();
        let sources: Vec<Source<'_>> = landmarks
            .labeled()
            .map(|e| Source {
                id: &e.doc_id,
                text: texts[e.doc_index],
                labels: &e.labels,
            })
            .collect();
        let mut stats = BTreeMap::new();
        let mut warnings = Vec::new();
        let emit_method = |m: Method, samples: &[AugmentedSample], stats: &mut BTreeMap<String, AugmentStats>| -> anyhow::Result<()> {
            write_jsonl(&dir.join(format!("{}.jsonl", m.as_str())), samples)?;
            let s = AugmentStats::tally(samples);
            eprintln!(
                "augment {m}: attempted {} ok {} regex_fail {} label_filtered {} gateway_failed {}",
                s.attempted, s.ok, s.regex_fail, s.label_filtered, s.gateway_failed
            );
            stats.insert(m.as_str().to_string(), s);
            Ok(())
        };
        if a.wordnet.enabled {
            let path = a.wordnet.synonyms.as_ref().expect("validated");
            let text = io::read_to_string(path).map_err(|e| stage_error(Stage::Augment, e))?;
            let db = SynonymDb::parse_tsv(&text, &path.display().to_string()).map_err(|e| stage_error(Stage::Augment, e))?;
            let wcfg = WordnetConfig {
                replace_prob: a.wordnet.replace_prob,
                top_k: a.wordnet.top_k,
                n_variants: a.wordnet.variants,
            };
            let mut samples = Vec::new();
            for src in &sources {
                samples.extend(wordnet_replace(src, &db, &wcfg, a.seed).map_err(|e| stage_error(Stage::Augment, e))?);
            }
            emit_method(Method::Wordnet, &samples, &mut stats)?;
        }
        if a.rewrite.enabled {
            let rcfg = RewriteConfig {
                n_variants: a.rewrite.variants,
                temperature: a.rewrite.temperature,
            };
            let samples = llm_rewrite(&sources, self.llm()?, &rcfg, a.seed);
            emit_method(Method::Rewrite, &samples, &mut stats)?;
        }
        if a.rag.enabled {
            let rcfg = RagConfig {
                n_variants: a.rag.variants,
                temperature: a.rag.temperature,
                top_clusters: a.rag.top_clusters,
                unlabeled_refs: a.rag.unlabeled_refs,
                policy: a.rag.policy,
            };
            let ctx = RagContext {
                model: &model,
                landmarks: &landmarks,
                ids: &ids,
                texts: &texts,
                catalog: &catalog,
                scheme: corpus.scheme,
            };
            let docs: Vec<usize> = (0..ids.len()).collect();
            let gw = self.llm()?;
            let (samples, w) = rag_generate(&ctx, &docs, gw, &rcfg, a.seed).map_err(|e| stage_error(Stage::Augment, e))?;
            warnings.extend(w);
            emit_method(Method::Rag, &samples, &mut stats)?;
        }
        let summary = AugmentSummary {
            stats,
            sources: sources.len(),
            pool: ids.len(),
            warnings,
        };
        write_json(&dir.join("stats.json"), &summary)?;
        Ok(())
    }

    fn diagnose(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, catalog) = self.load_corpus()?;
        let landmarks = self.load_landmarks(Stage::Annotate)?;
        let samples = self.load_samples()?;
        let originals: BTreeMap<String, String> = corpus
            .documents()
            .iter()
            .map(|d| (d.id.clone(), d.text.clone()))
            .collect();
        let embedder: Option<&dyn Embedder> = if self.cfg.diagnose.embed_similarity {
            Some(self.llm()? as &dyn Embedder)
        } else {
            None
        };
        let diversity = diversity_report(&samples, &originals, embedder)?;
        let before: Vec<&[String]> = landmarks.labeled().map(|e| e.labels.as_slice()).collect();
        let labels = label_distribution_report(&before, &samples, &catalog);
        let orig_texts: Vec<&str> = Self::pool(&corpus).iter().map(|d| d.text.as_str()).collect();
        let aug_texts: Vec<&str> = samples.iter().filter(|s| s.is_ok()).map(|s| s.text.as_str()).collect();
        let lengths = length_report(&orig_texts, &aug_texts);
        write_atomic(&dir.join("diversity.md"), diversity_markdown(&diversity).as_bytes())?;
        write_atomic(&dir.join("diversity.csv"), diversity_csv(&diversity).as_bytes())?;
        write_atomic(&dir.join("label_distribution.csv"), label_distribution_csv(&labels).as_bytes())?;
        write_atomic(&dir.join("length.md"), length_markdown(&lengths).as_bytes())?;
        write_json(
            &dir.join("diagnostics.json"),
            &json!({"diversity": diversity, "labels": labels, "lengths": lengths}),
        )?;
        for d in &diversity {
            eprintln!(
                "diagnose {}: mean pairwise jaccard {}",
                d.method,
                d.mean_jaccard.map_or_else(|| "-".into(), |j| format!("{j:.4}"))
            );
        }
        Ok(())
    }

    fn emit(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, catalog) = self.load_corpus()?;
        let landmarks = self.load_landmarks(Stage::Annotate)?;
        let samples = self.load_samples()?;
        let e = self.cfg.emit.clone();
        let scheme = corpus.scheme;
        let mut parts = Vec::new();
        for name in &e.parts {
            let (records, skipped): (Vec<FineTuneRecord>, usize) = if name == "landmark" {
                records_from_landmarks(&landmarks, |id| corpus.get(id).map(|d| d.text.as_str()), &e.subject, scheme, &catalog)
            } else {
                let method: Method = match name.as_str() {
                    "wordnet" => Method::Wordnet,
                    "rewrite" => Method::Rewrite,
                    _ => Method::Rag,
                };
                let mine: Vec<AugmentedSample> = samples.iter().filter(|s| s.method == method).cloned().collect();
                if mine.is_empty() {
                    log::warn!("emit: part `{name}` has no samples");
                }
                records_from_samples(&mine, &e.subject, scheme, &catalog)
            };
            if skipped > 0 {
                log::warn!("emit: {skipped} `{name}` records skipped (labels failed validation)");
            }
            write_jsonl(&dir.join(format!("{name}.jsonl")), &records)?;
            parts.push(DatasetPart {
                name: name.clone(),
                scheme,
                records,
            });
        }
        let (combined, mut manifest) = combine_datasets(parts, scheme, &e.subject, e.seed)?;
        manifest.output = "combined.jsonl".into();
        let out = dir.join("combined.jsonl");
        write_jsonl(&out, &combined)?;
        io::validate_dataset(&out).context("validating combined.jsonl")?;
        write_json(&dir.join("manifest.json"), &manifest)?;
        let prompts: Vec<TestPrompt> = corpus
            .split(Split::Test)
            .map(|d| TestPrompt {
                id: d.id.clone(),
                prompt: build_predict_prompt(&d.text, &e.subject),
            })
            .collect();
        write_jsonl(&dir.join("test_prompts.jsonl"), &prompts)?;
        eprintln!("emit: {} combined records, {} test prompts", manifest.total, prompts.len());
        Ok(())
    }

    fn evaluate(&mut self, dir: &Path) -> anyhow::Result<()> {
        let (corpus, catalog) = self.load_corpus()?;
        let scheme = corpus.scheme;
        let ev = self.cfg.evaluate.clone();
        if let Some(p) = &ev.predictions {
            let rows: Vec<PredictionRow> = read_jsonl(p).map_err(|e| stage_error(Stage::Evaluate, e))?;
            let report = score_run(&rows, &corpus, scheme).map_err(|e| stage_error(Stage::Evaluate, e))?;
            write_json(&dir.join("metrics.json"), &report)?;
            write_atomic(&dir.join("metrics.md"), report.to_markdown().as_bytes())?;
            eprint!("evaluate (predictions):\n{}", report.to_markdown());
        }
        if ev.cot_rag {
            let feats = self.load_features()?;
            let model = self.load_model()?;
            let landmarks = self.load_landmarks(Stage::Annotate)?;
            let pool_texts: Vec<&str> = Self::pool(&corpus).iter().map(|d| d.text.as_str()).collect();
            let test: Vec<_> = corpus.split(Split::Test).collect();
            let test_ids: Vec<String> = test.iter().map(|d| d.id.clone()).collect();
            let points = Self::dense_subset(&feats.matrix, &test_ids)?;
            let targets: Vec<CotTarget<'_>> = test
                .iter()
                .enumerate()
                .map(|(i, d)| CotTarget {
                    id: &d.id,
                    text: &d.text,
                    features: points.row(i),
                })
                .collect();
            let cfg = CotConfig {
                temperature: ev.cot_temperature,
                top_clusters: ev.cot_top_clusters,
            };
            let gw = self.llm()?;
            let preds = cot_rag_label(&targets, &model, &landmarks, &pool_texts, &catalog, gw, &cfg);
            let rows: Vec<PredictionRow> = preds.iter().map(prediction_row).collect();
            write_jsonl(&dir.join("cot_predictions.jsonl"), &rows)?;
            let report = score_run(&rows, &corpus, scheme).map_err(|e| stage_error(Stage::Evaluate, e))?;
            write_json(&dir.join("cot_metrics.json"), &report)?;
            write_atomic(&dir.join("cot_metrics.md"), report.to_markdown().as_bytes())?;
            eprint!("evaluate (CoT+RAG baseline):\n{}", report.to_markdown());
        }
        Ok(())
    }
}

fn warnings_text(ws: &[String]) -> String {
    let mut s = String::new();
    for w in ws {
        s.push_str(w);
        s.push('\n');
    }
    s
}
