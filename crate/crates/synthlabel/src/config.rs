//! Pipeline configuration (TOML). Relative paths are resolved against the
//! directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use synthlabel_core::augment::LabelPolicy;
use synthlabel_core::cluster::{Algorithm, BirchConfig, ClusterSpec, GmmConfig};
use synthlabel_core::corpus::{LabelScheme, SplitRatios};
use synthlabel_core::landmark::SelectionStrategy;
use synthlabel_core::vectorize::MIN_MAX_FEATURES;

use crate::gateway::{GatewayConfig, GatewayMode};
use crate::mock::MockConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Syntax { path: PathBuf, msg: String },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub landmarks: LandmarkConfig,
    #[serde(default)]
    pub annotate: AnnotateConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    pub emit: EmitConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub llm: LlmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<crate::io::CorpusFormat>,
    #[serde(default = "default_corpus_name")]
    pub name: String,
    #[serde(default = "default_scheme")]
    pub scheme: LabelScheme,
    /// `reuters`, `wos` or a catalog JSON path.
    pub catalog: String,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
}

fn default_corpus_name() -> String {
    "corpus".into()
}

fn default_scheme() -> LabelScheme {
    LabelScheme::MultiLabel
}

fn default_split() -> [f64; 3] {
    [0.5, 0.3, 0.2]
}

fn default_split_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSpec {
    Tfidf(usize),
    Embedding,
}

impl std::str::FromStr for FeatureSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "embedding" {
            return Ok(FeatureSpec::Embedding);
        }
        if s == "tfidf" {
            return Ok(FeatureSpec::Tfidf(1024));
        }
        match s.strip_prefix("tfidf:") {
            Some(n) => n
                .parse()
                .map(FeatureSpec::Tfidf)
                .map_err(|_| format!("bad max_features in `{s}`")),
            None => Err(format!("unknown feature spec `{s}` (tfidf:<max> or embedding)")),
        }
    }
}

impl std::fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSpec::Tfidf(n) => write!(f, "tfidf:{n}"),
            FeatureSpec::Embedding => f.write_str("embedding"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    /// `tfidf:<max_features>` or `embedding`.
    pub spec: String,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig { spec: "tfidf:1024".into() }
    }
}

impl FeaturesConfig {
    pub fn parsed(&self) -> Result<FeatureSpec, String> {
        self.spec.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_algo")]
    pub algo: Algorithm,
    pub k: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub gmm: GmmConfig,
    #[serde(default)]
    pub birch: BirchConfig,
}

fn default_algo() -> Algorithm {
    Algorithm::Gmm
}

fn default_seed() -> u64 {
    42
}

impl ClusterConfig {
    pub fn spec(&self) -> ClusterSpec {
        spec_for(self.algo, &self.gmm, &self.birch)
    }
}

pub fn spec_for(algo: Algorithm, gmm: &GmmConfig, birch: &BirchConfig) -> ClusterSpec {
    match algo {
        Algorithm::Gmm => ClusterSpec::Gmm(*gmm),
        Algorithm::Birch => ClusterSpec::Birch(*birch),
        other => ClusterSpec::default_for(other),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub algos: Vec<Algorithm>,
    /// Empty means the clustering k alone.
    pub ks: Vec<usize>,
    /// Empty means the clustering seed alone.
    pub seeds: Vec<u64>,
    pub silhouette_sample: Option<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            algos: Algorithm::ALL.to_vec(),
            ks: Vec::new(),
            seeds: Vec::new(),
            silhouette_sample: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Centroid,
    #[serde(alias = "llm")]
    LlmChoice,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandmarkConfig {
    pub strategy: StrategyKind,
    /// Random strategy only; defaults to the cluster count.
    pub count: Option<usize>,
    /// Random strategy only; defaults to the clustering seed.
    pub seed: Option<u64>,
    pub word_cap: usize,
    pub token_budget: usize,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        LandmarkConfig {
            strategy: StrategyKind::LlmChoice,
            count: None,
            seed: None,
            word_cap: 400,
            token_budget: 24_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotateMode {
    /// Copies the hidden gold labels (simulation).
    RevealGold,
    Import,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnotateConfig {
    pub mode: AnnotateMode,
    /// Labels JSONL for import mode.
    pub labels: Option<PathBuf>,
    pub annotator: String,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            mode: AnnotateMode::RevealGold,
            labels: None,
            annotator: "annotator".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordnetSection {
    pub enabled: bool,
    pub synonyms: Option<PathBuf>,
    pub variants: usize,
    pub replace_prob: f64,
    pub top_k: usize,
}

impl Default for WordnetSection {
    fn default() -> Self {
        WordnetSection {
            enabled: true,
            synonyms: None,
            variants: 10,
            replace_prob: 0.15,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewriteSection {
    pub enabled: bool,
    pub variants: usize,
    pub temperature: f64,
}

impl Default for RewriteSection {
    fn default() -> Self {
        RewriteSection {
            enabled: true,
            variants: 10,
            temperature: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RagSection {
    pub enabled: bool,
    pub variants: usize,
    pub temperature: f64,
    pub top_clusters: usize,
    pub unlabeled_refs: usize,
    pub policy: LabelPolicy,
}

impl Default for RagSection {
    fn default() -> Self {
        RagSection {
            enabled: true,
            variants: 3,
            temperature: 0.7,
            top_clusters: 5,
            unlabeled_refs: 3,
            policy: LabelPolicy::DropUnknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub seed: u64,
    pub wordnet: WordnetSection,
    pub rewrite: RewriteSection,
    pub rag: RagSection,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            seed: 42,
            wordnet: WordnetSection::default(),
            rewrite: RewriteSection::default(),
            rag: RagSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnoseConfig {
    /// Adds the embedding cosine column, which calls the embedding endpoint.
    pub embed_similarity: bool,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig { embed_similarity: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitConfig {
    pub subject: String,
    #[serde(default = "default_parts")]
    pub parts: Vec<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

pub const PART_NAMES: [&str; 4] = ["landmark", "wordnet", "rewrite", "rag"];

fn default_parts() -> Vec<String> {
    PART_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// External predictions JSONL `{"id","output"}` for the test split.
    pub predictions: Option<PathBuf>,
    /// Runs the chain-of-thought retrieval baseline on the test split.
    pub cot_rag: bool,
    pub cot_temperature: f64,
    pub cot_top_clusters: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            predictions: None,
            cot_rag: true,
            cot_temperature: 0.0,
            cot_top_clusters: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Record,
    Replay,
    /// Starts the in-process mock server and talks to it.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub mode: LlmMode,
    pub base_url: Option<String>,
    pub embed_base_url: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub transcripts: Option<PathBuf>,
    pub max_inflight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub embed_batch: usize,
    pub mock: MockConfig,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let g = GatewayConfig::default();
        LlmConfig {
            mode: LlmMode::Mock,
            base_url: None,
            embed_base_url: None,
            chat_model: g.chat_model,
            embed_model: g.embed_model,
            transcripts: None,
            max_inflight: g.max_inflight,
            max_retries: g.max_retries,
            backoff_ms: g.backoff_ms,
            timeout_secs: g.timeout_secs,
            embed_batch: g.embed_batch,
            mock: MockConfig::default(),
        }
    }
}

impl LlmConfig {
    /// Gateway settings; endpoints come from the config, then the
    /// environment. Mock mode leaves the URLs for the caller to fill in.
    pub fn gateway_config(&self) -> GatewayConfig {
        let mut g = GatewayConfig::default();
        g.apply_env();
        if let Some(u) = &self.base_url {
            g.base_url = u.clone();
        }
        if let Some(u) = &self.embed_base_url {
            g.embed_base_url = u.clone();
        }
        g.chat_model = self.chat_model.clone();
        g.embed_model = self.embed_model.clone();
        g.transcripts = self.transcripts.clone();
        g.max_inflight = self.max_inflight;
        g.max_retries = self.max_retries;
        g.backoff_ms = self.backoff_ms;
        g.timeout_secs = self.timeout_secs;
        g.embed_batch = self.embed_batch;
        g.mode = match self.mode {
            LlmMode::Live | LlmMode::Mock => GatewayMode::Live,
            LlmMode::Record => GatewayMode::Record,
            LlmMode::Replay => GatewayMode::Replay,
        };
        g
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Reads, resolves relative paths against the file's directory and
    /// validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.run.output_dir);
        fix(&mut self.corpus.path);
        if !matches!(self.corpus.catalog.as_str(), "reuters" | "wos") {
            let p = base.join(&self.corpus.catalog);
            self.corpus.catalog = p.to_string_lossy().into_owned();
        }
        for p in [
            self.annotate.labels.as_mut(),
            self.augment.wordnet.synonyms.as_mut(),
            self.evaluate.predictions.as_mut(),
            self.llm.transcripts.as_mut(),
            self.llm.mock.transcripts.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let [a, b, c] = self.corpus.split;
        if let Err(e) = SplitRatios::new(a, b, c) {
            errs.push(format!("corpus.split: {e}"));
        }
        match self.features.parsed() {
            Err(e) => errs.push(format!("features.spec: {e}")),
            Ok(FeatureSpec::Tfidf(n)) if n < MIN_MAX_FEATURES => {
                errs.push(format!("features.spec: max_features must be at least {MIN_MAX_FEATURES}"))
            }
            _ => {}
        }
        if self.cluster.k < 2 {
            errs.push("cluster.k must be at least 2".into());
        }
        if self.metrics.algos.is_empty() {
            errs.push("metrics.algos is empty".into());
        }
        if self.metrics.ks.iter().any(|&k| k < 2) {
            errs.push("metrics.ks entries must be at least 2".into());
        }
        if self.landmarks.strategy == StrategyKind::Random && self.landmarks.count == Some(0) {
            errs.push("landmarks.count must be positive".into());
        }
        if self.landmarks.word_cap == 0 {
            errs.push("landmarks.word_cap must be positive".into());
        }
        if self.annotate.mode == AnnotateMode::Import && self.annotate.labels.is_none() {
            errs.push("annotate.labels is required in import mode".into());
        }
        let w = &self.augment.wordnet;
        if w.enabled {
            if w.synonyms.is_none() {
                errs.push("augment.wordnet.synonyms is required when wordnet is enabled".into());
            }
            if !(0.0..=1.0).contains(&w.replace_prob) {
                errs.push("augment.wordnet.replace_prob must be in [0, 1]".into());
            }
            if w.top_k == 0 {
                errs.push("augment.wordnet.top_k must be positive".into());
            }
        }
        for (name, t) in [
            ("augment.rewrite.temperature", self.augment.rewrite.temperature),
            ("augment.rag.temperature", self.augment.rag.temperature),
            ("evaluate.cot_temperature", self.evaluate.cot_temperature),
        ] {
            if !(t.is_finite() && t >= 0.0) {
                errs.push(format!("{name} must be >= 0"));
            }
        }
        if self.augment.rag.top_clusters == 0 {
            errs.push("augment.rag.top_clusters must be positive".into());
        }
        if self.emit.subject.trim().is_empty() {
            errs.push("emit.subject is empty".into());
        }
        for p in &self.emit.parts {
            if !PART_NAMES.contains(&p.as_str()) {
                errs.push(format!("emit.parts: unknown part `{p}`"));
            }
        }
        if self.emit.parts.is_empty() {
            errs.push("emit.parts is empty".into());
        }
        if self.llm.max_inflight == 0 {
            errs.push("llm.max_inflight must be positive".into());
        }
        if self.llm.mode == LlmMode::Replay && self.llm.transcripts.is_none() {
            errs.push("llm.transcripts is required in replay mode".into());
        }
        if self.llm.mock.embed_dim == 0 {
            errs.push("llm.mock.embed_dim must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        let [a, b, c] = self.corpus.split;
        SplitRatios::new(a, b, c).expect("validated")
    }

    pub fn strategy(&self) -> SelectionStrategy {
        match self.landmarks.strategy {
            StrategyKind::Centroid => SelectionStrategy::Centroid,
            StrategyKind::LlmChoice => SelectionStrategy::LlmChoice,
            StrategyKind::Random => SelectionStrategy::Random {
                seed: self.landmarks.seed.unwrap_or(self.cluster.seed),
                count: self.landmarks.count.unwrap_or(self.cluster.k),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[corpus]
path = "c.jsonl"
catalog = "reuters"

[cluster]
k = 20

[augment.wordnet]
synonyms = "syn.tsv"

[emit]
subject = "Reuters news"
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let mut cfg = PipelineConfig::from_toml(MINIMAL, Path::new("x.toml")).unwrap();
        cfg.resolve_paths(Path::new("/base"));
        cfg.validate().unwrap();
        assert_eq!(cfg.corpus.path, PathBuf::from("/base/c.jsonl"));
        assert_eq!(cfg.features.parsed().unwrap(), FeatureSpec::Tfidf(1024));
        assert_eq!(cfg.augment.rag.variants, 3);
        assert_eq!(cfg.landmarks.strategy, StrategyKind::LlmChoice);
        let back = PipelineConfig::from_toml(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_collects_problems() {
        let text = MINIMAL.replace("k = 20", "k = 1").replace("Reuters news", " ");
        let cfg = PipelineConfig::from_toml(&text, Path::new("x.toml")).unwrap();
        match cfg.validate() {
            Err(ConfigError::Invalid(errs)) => assert_eq!(errs.len(), 2, "{errs:?}"),
            other => panic!("{other:?}"),
        }
        let typo = MINIMAL.replace("k = 20", "k = 20\nkk = 3");
        assert!(matches!(PipelineConfig::from_toml(&typo, Path::new("x.toml")), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn feature_specs_parse() {
        assert_eq!("tfidf:512".parse::<FeatureSpec>().unwrap(), FeatureSpec::Tfidf(512));
        assert_eq!("embedding".parse::<FeatureSpec>().unwrap(), FeatureSpec::Embedding);
        assert!("bert".parse::<FeatureSpec>().is_err());
        assert_eq!(FeatureSpec::Tfidf(64).to_string(), "tfidf:64");
    }
}
