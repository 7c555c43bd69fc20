//! Command-line front end. Subcommands mirror the pipeline stages and share
//! one config file; flags override individual config values (and so take part
//! in the stage cache key).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use synthlabel_core::augment::AugmentedSample;
use synthlabel_core::cluster::Algorithm;
use synthlabel_core::corpus::LabelScheme;
use synthlabel_core::emit::{combine_datasets, records_from_samples, DatasetPart, FineTuneRecord};
use synthlabel_core::llm::LlmError;

use crate::config::{AnnotateMode, ConfigError, FeatureSpec, PipelineConfig, StrategyKind};
use crate::io::{self, IoError};
use crate::mock::{serve_until_signal, MockConfig};
use crate::pipeline::{Pipeline, Stage};
use crate::{user_error, UserError};

#[derive(Debug, Parser)]
#[command(name = "synthlabel", version, about = "Build synthetic instruction-tuning datasets from a partly labeled corpus")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Pipeline config file (TOML).
    #[arg(short, long, default_value = "synthlabel.toml")]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every stage in order, skipping the ones already cached.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Stop after this stage.
        #[arg(long)]
        through: Option<StageArg>,
    },
    /// Load and split the corpus.
    Ingest {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Compute document features.
    Features {
        #[command(flatten)]
        cfg: ConfigArg,
        /// `tfidf:<max>` or `embedding`.
        #[arg(long = "features")]
        spec: Option<FeatureSpec>,
    },
    /// Clustering.
    #[command(subcommand)]
    Cluster(ClusterCmd),
    /// Cluster quality sweep on the validation split.
    Metrics {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Landmark selection and annotation.
    #[command(subcommand)]
    Landmark(LandmarkCmd),
    /// Generate synthetic samples.
    Augment {
        /// Only this method; all enabled methods when omitted.
        method: Option<MethodArg>,
        #[command(flatten)]
        cfg: ConfigArg,
        /// Variants per source (applies to the named method).
        #[arg(long)]
        variants: Option<usize>,
    },
    /// Diversity, label distribution and length reports.
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArg,
    },
    /// Write the fine-tuning dataset. With `--parts` it combines existing
    /// files without a config.
    Emit(EmitArgs),
    /// Score predictions on the test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Predictions JSONL with `id` and `output`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Skip the CoT+RAG baseline.
        #[arg(long)]
        no_cot: bool,
    },
    /// Serve the mock LLM endpoints in the foreground.
    MockServe {
        /// Directory with transcripts and an optional mock.toml.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = 8089)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Check a config file and print it with defaults filled in.
    CheckConfig {
        #[command(flatten)]
        cfg: ConfigArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClusterCmd {
    /// Fit a clustering over the train pool.
    Fit {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        algo: Option<Algorithm>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LandmarkCmd {
    /// Pick one representative document per cluster.
    Select {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        strategy: Option<StrategyArg>,
        /// Random strategy: number of documents.
        #[arg(long)]
        count: Option<usize>,
        /// Random strategy: seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attach labels to the selected landmarks.
    Annotate {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, conflicts_with_all = ["labels", "reveal_gold"])]
        interactive: bool,
        /// Labels JSONL with `cluster`, `doc_id` and `labels`.
        #[arg(long, conflicts_with = "reveal_gold")]
        labels: Option<PathBuf>,
        /// Copy the hidden gold labels (simulation).
        #[arg(long)]
        reveal_gold: bool,
    },
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Comma-separated part files: fine-tuning records or augmented samples.
    #[arg(long, value_delimiter = ',', requires_all = ["scheme", "subject", "out"])]
    pub parts: Vec<PathBuf>,
    #[arg(long)]
    pub scheme: Option<LabelScheme>,
    #[arg(long)]
    pub subject: Option<String>,
    /// Catalog for augmented-sample parts: `reuters`, `wos` or a JSON file.
    #[arg(long, default_value = "reuters")]
    pub catalog: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
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

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Ingest => Stage::Ingest,
            StageArg::Features => Stage::Features,
            StageArg::Cluster => Stage::Cluster,
            StageArg::Metrics => Stage::Metrics,
            StageArg::Landmarks => Stage::Landmarks,
            StageArg::Annotate => Stage::Annotate,
            StageArg::Augment => Stage::Augment,
            StageArg::Diagnose => Stage::Diagnose,
            StageArg::Emit => Stage::Emit,
            StageArg::Evaluate => Stage::Evaluate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Wordnet,
    Rewrite,
    Rag,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Centroid,
    #[value(alias = "llm-choice")]
    Llm,
    Random,
}

fn load(cfg: &ConfigArg, tweak: impl FnOnce(&mut PipelineConfig)) -> anyhow::Result<PipelineConfig> {
    let mut c = PipelineConfig::load(&cfg.config)?;
    tweak(&mut c);
    c.validate()?;
    Ok(c)
}

fn report(stages: &[crate::pipeline::StageOutcome]) {
    for o in stages {
        let tag = if o.cached { "cached" } else { "ran" };
        println!("{}\t{tag}\t{}", o.stage, o.dir.display());
    }
}

fn run_one(cfg: PipelineConfig, stage: Stage) -> anyhow::Result<()> {
    let mut p = Pipeline::new(cfg);
    let out = p.run_stage(stage)?;
    report(&[out]);
    Ok(())
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { cfg, through } => {
            let mut p = Pipeline::new(load(&cfg, |_| {})?);
            let out = match through {
                Some(s) => p.run_through(s.into())?,
                None => p.run_all()?,
            };
            report(&out);
            if let Some(s) = p.gateway_stats() {
                eprintln!(
                    "llm: {} requests, {} attempts, {} retries, {} replayed",
                    s.requests, s.attempts, s.retries, s.replayed
                );
            }
            Ok(())
        }
        Command::Ingest { cfg } => run_one(load(&cfg, |_| {})?, Stage::Ingest),
        Command::Features { cfg, spec } => run_one(
            load(&cfg, |c| {
                if let Some(s) = spec {
                    c.features.spec = s.to_string();
                }
            })?,
            Stage::Features,
        ),
        Command::Cluster(ClusterCmd::Fit { cfg, algo, k, seed }) => run_one(
            load(&cfg, |c| {
                if let Some(a) = algo {
                    c.cluster.algo = a;
                }
                if let Some(k) = k {
                    c.cluster.k = k;
                }
                if let Some(s) = seed {
                    c.cluster.seed = s;
                }
            })?,
            Stage::Cluster,
        ),
        Command::Metrics { cfg } => run_one(load(&cfg, |_| {})?, Stage::Metrics),
        Command::Landmark(LandmarkCmd::Select {
            cfg,
            strategy,
            count,
            seed,
        }) => run_one(
            load(&cfg, |c| {
                if let Some(s) = strategy {
                    c.landmarks.strategy = match s {
                        StrategyArg::Centroid => StrategyKind::Centroid,
                        StrategyArg::Llm => StrategyKind::LlmChoice,
                        StrategyArg::Random => StrategyKind::Random,
                    };
                }
                if count.is_some() {
                    c.landmarks.count = count;
                }
                if seed.is_some() {
                    c.landmarks.seed = seed;
                }
            })?,
            Stage::Landmarks,
        ),
        Command::Landmark(LandmarkCmd::Annotate {
            cfg,
            interactive,
            labels,
            reveal_gold,
        }) => run_one(
            load(&cfg, |c| {
                if interactive {
                    c.annotate.mode = AnnotateMode::Interactive;
                } else if let Some(l) = labels {
                    c.annotate.mode = AnnotateMode::Import;
                    c.annotate.labels = Some(l);
                } else if reveal_gold {
                    c.annotate.mode = AnnotateMode::RevealGold;
                }
            })?,
            Stage::Annotate,
        ),
        Command::Augment { method, cfg, variants } => run_one(
            load(&cfg, |c| {
                let a = &mut c.augment;
                if let Some(m) = method {
                    a.wordnet.enabled = m == MethodArg::Wordnet;
                    a.rewrite.enabled = m == MethodArg::Rewrite;
                    a.rag.enabled = m == MethodArg::Rag;
                }
                if let Some(n) = variants {
                    match method {
                        Some(MethodArg::Wordnet) => a.wordnet.variants = n,
                        Some(MethodArg::Rewrite) => a.rewrite.variants = n,
                        Some(MethodArg::Rag) => a.rag.variants = n,
                        None => {
                            a.wordnet.variants = n;
                            a.rewrite.variants = n;
                            a.rag.variants = n;
                        }
                    }
                }
            })?,
            Stage::Augment,
        ),
        Command::Diagnose { cfg } => run_one(load(&cfg, |_| {})?, Stage::Diagnose),
        Command::Emit(args) => emit(args),
        Command::Evaluate { cfg, predictions, no_cot } => run_one(
            load(&cfg, |c| {
                if let Some(p) = predictions {
                    c.evaluate.predictions = Some(p);
                }
                if no_cot {
                    c.evaluate.cot_rag = false;
                }
            })?,
            Stage::Evaluate,
        ),
        Command::MockServe { fixtures, port, host } => {
            let cfg = match &fixtures {
                Some(dir) => {
                    if !dir.is_dir() {
                        return Err(user_error(format!("{}: not a directory", dir.display())));
                    }
                    MockConfig::from_fixture_dir(dir).map_err(|e| user_error(format!("{}: {e}", dir.display())))?
                }
                None => MockConfig::default(),
            };
            let bind = format!("{host}:{port}");
            serve_until_signal(cfg, &bind).map_err(|e| match e.kind() {
                std::io::ErrorKind::AddrInUse => user_error(format!("cannot bind {bind}: port in use")),
                std::io::ErrorKind::AddrNotAvailable | std::io::ErrorKind::PermissionDenied => {
                    user_error(format!("cannot bind {bind}: {e}"))
                }
                _ => e.into(),
            })
        }
        Command::CheckConfig { cfg } => {
            let c = load(&cfg, |_| {})?;
            print!("{}", c.to_toml());
            Ok(())
        }
    }
}

fn emit(args: EmitArgs) -> anyhow::Result<()> {
    if args.parts.is_empty() {
        let Some(config) = args.config else {
            return Err(user_error("emit needs --config, or --parts with --scheme, --subject and --out"));
        };
        let cfg = load(&ConfigArg { config }, |c| {
            if let Some(s) = args.subject {
                c.emit.subject = s;
            }
        })?;
        if args.scheme.is_some_and(|s| s != cfg.corpus.scheme) {
            return Err(user_error("--scheme differs from the corpus scheme in the config"));
        }
        return run_one(cfg, Stage::Emit);
    }
    let scheme = args.scheme.expect("required by clap");
    let subject = args.subject.expect("required by clap");
    let out = args.out.expect("required by clap");
    let catalog = io::resolve_catalog(&args.catalog, Path::new(""))?;
    let mut parts = Vec::new();
    for path in &args.parts {
        let records = read_part(path, &subject, scheme, &catalog)?;
        parts.push(DatasetPart {
            name: path.display().to_string(),
            scheme,
            records,
        });
    }
    let (records, mut manifest) = combine_datasets(parts, scheme, &subject, args.seed)?;
    manifest.output = out.display().to_string();
    io::write_jsonl(&out, &records)?;
    io::validate_dataset(&out)?;
    let manifest_path = out.with_extension("manifest.json");
    io::write_json(&manifest_path, &manifest)?;
    println!("{} records -> {} (manifest {})", manifest.total, out.display(), manifest_path.display());
    Ok(())
}

/// A part file holds either finished records or augmented samples; the first
/// non-blank line decides.
fn read_part(
    path: &Path,
    subject: &str,
    scheme: LabelScheme,
    catalog: &synthlabel_core::catalog::LabelCatalog,
) -> anyhow::Result<Vec<FineTuneRecord>> {
    let text = io::read_to_string(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty());
    let is_records = first
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("instruction").is_some());
    if is_records {
        return Ok(io::read_jsonl(path)?);
    }
    let samples: Vec<AugmentedSample> = io::read_jsonl(path)?;
    let (records, skipped) = records_from_samples(&samples, subject, scheme, catalog);
    if skipped > 0 {
        log::warn!("{}: {skipped} samples skipped (labels failed validation)", path.display());
    }
    Ok(records)
}

/// 1 for problems with the user's input, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UserError>() || cause.is::<ConfigError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<IoError>() {
            return match e {
                IoError::Io { source, .. }
                    if !matches!(
                        source.kind(),
                        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied
                    ) =>
                {
                    2
                }
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<LlmError>() {
            return match e {
                LlmError::InvalidRequest(_) | LlmError::TooLong { .. } | LlmError::ReplayMiss(_) => 1,
                _ => 2,
            };
        }
    }
    2
}

/// The error chain, leaving out causes already quoted by their parent.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion
                | clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
