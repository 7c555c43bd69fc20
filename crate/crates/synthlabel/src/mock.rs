//! Local stand-in for the chat and embedding endpoints. Answers come from
//! stored transcripts when present, otherwise from deterministic rules keyed
//! on the prompt templates.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use synthlabel_core::cluster::synthetic::standard_normal;
use synthlabel_core::llm::ChatRequest;
use synthlabel_core::prompts::{
    section, COT_TARGET, RAG_LABELED, RAG_PRIMARY, RAG_TASK, RAG_UNLABELED, REWRITE_ORIGINAL, REWRITE_TAIL,
    SELECT_HEADER, TAGS_HEADER,
};
use synthlabel_core::rng::{derive_seed, rng, rng_with, salt_str};
use synthlabel_core::text::tokens;

use crate::gateway::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewriteRule {
    /// Returns the original text unchanged.
    Echo,
    /// Drops a seeded fifth of the words.
    Paraphrase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RagRule {
    /// Primary document verbatim.
    Echo,
    /// Part of the primary document plus words from one unlabeled reference.
    Remix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub seed: u64,
    pub embed_dim: usize,
    pub rewrite: RewriteRule,
    pub rag: RagRule,
    /// Requests whose hash is divisible by this always get HTTP 500 (0 = never).
    pub fail_every: u64,
    /// Every request hash gets this many 503s before it is answered.
    pub transient_failures: u32,
    /// RAG answers whose hash is divisible by this lack the Content/Label markers.
    pub malformed_every: u64,
    /// Directory of `{hash}.json` transcripts answered verbatim.
    pub transcripts: Option<PathBuf>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            seed: 0,
            embed_dim: 32,
            rewrite: RewriteRule::Paraphrase,
            rag: RagRule::Remix,
            fail_every: 0,
            transient_failures: 0,
            malformed_every: 0,
            transcripts: None,
        }
    }
}

impl MockConfig {
    /// Rules from `{dir}/mock.toml` when present; transcripts from `dir`.
    pub fn from_fixture_dir(dir: &Path) -> anyhow::Result<Self> {
        let rules = dir.join("mock.toml");
        let mut cfg: MockConfig = if rules.exists() {
            toml::from_str(&std::fs::read_to_string(&rules)?)?
        } else {
            MockConfig::default()
        };
        if cfg.transcripts.is_none() {
            cfg.transcripts = Some(dir.to_path_buf());
        }
        Ok(cfg)
    }
}

fn hash_number(hash: &str) -> u64 {
    u64::from_str_radix(&hash[..16.min(hash.len())], 16).unwrap_or(0)
}

fn first_label(block: &str) -> Option<&str> {
    let start = block.find("Label: [")? + "Label: [".len();
    let end = block[start..].find(']')?;
    Some(block[start..start + end].split(',').next().unwrap_or("").trim())
}

fn keep_words(text: &str, p_keep: f64, rng: &mut synthlabel_core::rng::Rng) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut kept: Vec<String> = words
        .iter()
        .filter(|_| rng.random::<f64>() < p_keep)
        .map(|w| w.to_string())
        .collect();
    if kept.is_empty() {
        kept.extend(words.first().map(|w| w.to_string()));
    }
    kept
}

/// Rule-based answer for one request.
pub fn rule_response(cfg: &MockConfig, req: &ChatRequest) -> String {
    let prompt = req.prompt_text();
    let h = hash_number(&req.hash());
    let mut r = rng_with(cfg.seed, &[h]);
    if prompt.contains(RAG_PRIMARY) {
        let primary = section(&prompt, RAG_PRIMARY, &[RAG_TASK]).unwrap_or("");
        if cfg.malformed_every > 0 && h.is_multiple_of(cfg.malformed_every) {
            return format!("Here is a new document. {primary}");
        }
        let label = section(&prompt, RAG_LABELED, &[RAG_UNLABELED])
            .and_then(first_label)
            .unwrap_or("");
        let content = match cfg.rag {
            RagRule::Echo => primary.to_string(),
            RagRule::Remix => {
                let mut words = keep_words(primary, 0.6, &mut r);
                let refs: Vec<&str> = section(&prompt, RAG_UNLABELED, &[RAG_PRIMARY])
                    .unwrap_or("")
                    .split("Content:")
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                if !refs.is_empty() {
                    let pick = refs[r.random_range(0..refs.len())];
                    words.extend(pick.split_whitespace().take(15).map(String::from));
                }
                words.join(" ")
            }
        };
        return format!("Content: {content}\nLabel: [{label}]");
    }
    if prompt.contains(REWRITE_ORIGINAL) {
        let original = section(&prompt, REWRITE_ORIGINAL, &[REWRITE_TAIL]).unwrap_or("");
        return match cfg.rewrite {
            RewriteRule::Echo => original.to_string(),
            RewriteRule::Paraphrase => format!("In other words, {}", keep_words(original, 0.8, &mut r).join(" ")),
        };
    }
    if prompt.contains(SELECT_HEADER) {
        return "[1]".into();
    }
    if prompt.contains(COT_TARGET) {
        let label = section(&prompt, RAG_LABELED, &[COT_TARGET])
            .and_then(first_label)
            .unwrap_or("");
        return format!("Thought: The target reads like the closest reference.\nLabel: [{label}]");
    }
    if prompt.contains(TAGS_HEADER) {
        return "[unknown]".into();
    }
    "I cannot help with that.".into()
}

/// Cuts the answer right after the earliest stop string.
pub fn apply_stop(text: &str, stop: Option<&[String]>) -> String {
    let cut = stop
        .unwrap_or(&[])
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()).map(|i| i + s.len()))
        .min();
    match cut {
        Some(i) => text[..i].to_string(),
        None => text.to_string(),
    }
}

/// Sum of per-token seeded Gaussian projections, L2-normalized.
pub fn hash_embedding(text: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for t in tokens(text) {
        let mut r = rng(derive_seed(seed, &[salt_str(&t)]));
        for x in v.iter_mut() {
            *x += standard_normal(&mut r);
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else if let Some(x) = v.first_mut() {
        *x = 1.0;
    }
    v
}

struct AppState {
    cfg: MockConfig,
    attempts: Mutex<HashMap<String, u32>>,
}

fn error(status: StatusCode, msg: &str) -> Response {
    (status, Json(json!({"error": {"message": msg}}))).into_response()
}

async fn chat(State(st): State<Arc<AppState>>, Json(body): Json<Value>) -> Response {
    let req: ChatRequest = match serde_json::from_value(body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    if let Err(e) = req.validate() {
        return error(StatusCode::BAD_REQUEST, &e.to_string());
    }
    let hash = req.hash();
    if let Some(dir) = &st.cfg.transcripts {
        let p = dir.join(format!("{hash}.json"));
        if let Ok(text) = std::fs::read_to_string(&p) {
            return match serde_json::from_str::<Transcript>(&text) {
                Ok(t) => completion(&req, t.response),
                Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, &format!("bad transcript: {e}")),
            };
        }
    }
    if st.cfg.fail_every > 0 && hash_number(&hash).is_multiple_of(st.cfg.fail_every) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, "injected failure");
    }
    if st.cfg.transient_failures > 0 {
        let mut seen = st.attempts.lock().expect("attempts lock");
        let n = seen.entry(hash.clone()).or_insert(0);
        *n += 1;
        if *n <= st.cfg.transient_failures {
            return error(StatusCode::SERVICE_UNAVAILABLE, "injected transient failure");
        }
    }
    let text = apply_stop(&rule_response(&st.cfg, &req), req.stop.as_deref());
    completion(&req, text)
}

fn completion(req: &ChatRequest, text: String) -> Response {
    Json(json!({
        "id": "mock",
        "object": "chat.completion",
        "model": req.model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
    }))
    .into_response()
}

async fn embeddings(State(st): State<Arc<AppState>>, Json(body): Json<Value>) -> Response {
    let inputs: Vec<String> = match body.get("input") {
        Some(Value::String(s)) => vec![s.clone()],
        Some(v @ Value::Array(_)) => match serde_json::from_value(v.clone()) {
            Ok(xs) => xs,
            Err(e) => return error(StatusCode::BAD_REQUEST, &e.to_string()),
        },
        _ => return error(StatusCode::BAD_REQUEST, "input must be a string or a list of strings"),
    };
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": hash_embedding(t, st.cfg.seed, st.cfg.embed_dim)}))
        .collect();
    Json(json!({"object": "list", "data": data, "model": body.get("model")})).into_response()
}

pub fn router(cfg: MockConfig) -> Router {
    let state = Arc::new(AppState {
        cfg,
        attempts: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .with_state(state)
}

/// Mock server on a background thread; stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    /// Binds `bind` (use port 0 for any free port). Fails if the port is taken.
    pub fn start(cfg: MockConfig, bind: &str) -> std::io::Result<Self> {
        let listener = std::net::TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, router(cfg))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(MockServer {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Serves in the foreground until Ctrl-C or SIGTERM.
pub fn serve_until_signal(cfg: MockConfig, bind: &str) -> std::io::Result<()> {
    let listener = std::net::TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        log::info!("mock LLM server listening on http://{addr}");
        eprintln!("mock LLM server listening on http://{addr}");
        axum::serve(listener, router(cfg))
            .with_graceful_shutdown(shutdown_signal())
            .await
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("mock LLM server shutting down");
}
