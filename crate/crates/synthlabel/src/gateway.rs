//! Blocking client for OpenAI-compatible chat and embedding endpoints, with
//! retries, a transcript store and bounded concurrency.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use synthlabel_core::llm::{embedding_hash, ChatModel, ChatRequest, Embedder, LlmError};
use synthlabel_core::text::approx_tokens;

use crate::io::{read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    /// Always call the endpoint.
    Live,
    /// Reuse stored transcripts, call the endpoint on a miss and store the answer.
    Record,
    /// Only stored transcripts; a miss is an error.
    Replay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_base_url: String,
    #[serde(skip)]
    pub embed_api_key: Option<String>,
    pub embed_model: String,
    pub mode: GatewayMode,
    pub transcripts: Option<PathBuf>,
    pub max_inflight: usize,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub chat_token_limit: usize,
    pub embed_token_limit: usize,
    pub embed_batch: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            base_url: "http://127.0.0.1:8089".into(),
            api_key: None,
            chat_model: "qwen2.5-72b-instruct".into(),
            embed_base_url: "http://127.0.0.1:8089".into(),
            embed_api_key: None,
            embed_model: "bge-m3".into(),
            mode: GatewayMode::Live,
            transcripts: None,
            max_inflight: 8,
            max_retries: 5,
            backoff_ms: 250,
            timeout_secs: 120,
            chat_token_limit: 32_768,
            embed_token_limit: 8_192,
            embed_batch: 64,
        }
    }
}

impl GatewayConfig {
    /// Fills endpoints and keys from LLM_BASE_URL, LLM_API_KEY, EMBED_BASE_URL
    /// and EMBED_API_KEY where set.
    pub fn apply_env(&mut self) {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = get("LLM_BASE_URL") {
            self.base_url = v;
        }
        if let Some(v) = get("LLM_API_KEY") {
            self.api_key = Some(v);
        }
        if let Some(v) = get("EMBED_BASE_URL") {
            self.embed_base_url = v;
        }
        if let Some(v) = get("EMBED_API_KEY") {
            self.embed_api_key = Some(v);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub hash: String,
    pub response: String,
    pub latency_ms: u64,
    pub mode: GatewayMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request: Option<ChatRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTranscript {
    pub hash: String,
    pub model: String,
    pub vector: Vec<f64>,
}

/// Counters since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub attempts: u64,
    pub retries: u64,
    pub replayed: u64,
}

enum Failure {
    Transient(String),
    Fatal(LlmError),
}

pub struct Gateway {
    cfg: GatewayConfig,
    http: reqwest::blocking::Client,
    requests: AtomicU64,
    attempts: AtomicU64,
    retries: AtomicU64,
    replayed: AtomicU64,
}

fn transient_status(s: u16) -> bool {
    s == 408 || s == 429 || (500..600).contains(&s)
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self, LlmError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Gateway {
            cfg,
            http,
            requests: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            retries: AtomicU64::new(0),
            replayed: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::Relaxed),
            attempts: self.attempts.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            replayed: self.replayed.load(Ordering::Relaxed),
        }
    }

    fn transcript_path(&self, hash: &str) -> Option<PathBuf> {
        self.cfg.transcripts.as_ref().map(|d| d.join(format!("{hash}.json")))
    }

    fn embed_transcript_path(&self, hash: &str) -> Option<PathBuf> {
        self.cfg.transcripts.as_ref().map(|d| d.join("embed").join(format!("{hash}.json")))
    }

    fn post_once(&self, url: &str, key: Option<&str>, body: &Value) -> Result<Value, Failure> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let mut req = self.http.post(url).json(body);
        if let Some(k) = key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| Failure::Transient(e.to_string()))?;
        if transient_status(status) {
            return Err(Failure::Transient(format!("HTTP {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(Failure::Fatal(LlmError::Status { status, body: text }));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(LlmError::MalformedResponse(e.to_string())))
    }

    /// POST with exponential backoff on 408, 429, 5xx and transport errors.
    fn post(&self, url: &str, key: Option<&str>, body: &Value) -> Result<Value, LlmError> {
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=max_attempts {
            match self.post_once(url, key, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    last = msg;
                    if attempt < max_attempts {
                        self.retries.fetch_add(1, Ordering::Relaxed);
                        log::warn!("attempt {attempt} to {url} failed: {last}; retrying");
                        let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(10));
                        std::thread::sleep(Duration::from_millis(wait.min(30_000)));
                    }
                }
            }
        }
        Err(LlmError::RetriesExhausted {
            attempts: max_attempts,
            last,
        })
    }

    fn chat_live(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut body = json!({
            "model": req.model,
            "messages": req.messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.content})).collect::<Vec<_>>(),
            "temperature": req.temperature,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        if let Some(t) = req.max_tokens {
            body["max_tokens"] = json!(t);
        }
        if let Some(s) = req.seed {
            body["seed"] = json!(s);
        }
        let url = format!("{}/v1/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let v = self.post(&url, self.cfg.api_key.as_deref(), &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| LlmError::MalformedResponse("missing choices[0].message.content".into()))
    }

    fn embed_live(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let body = json!({"model": self.cfg.embed_model, "input": texts});
        let url = format!("{}/v1/embeddings", self.cfg.embed_base_url.trim_end_matches('/'));
        let v = self.post(&url, self.cfg.embed_api_key.as_deref(), &body)?;
        let data = v
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| LlmError::MalformedResponse("missing data".into()))?;
        if data.len() != texts.len() {
            return Err(LlmError::MalformedResponse(format!(
                "{} embeddings for {} inputs",
                data.len(),
                texts.len()
            )));
        }
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vec: Vec<f64> = item
                .get("embedding")
                .and_then(|e| serde_json::from_value(e.clone()).ok())
                .ok_or_else(|| LlmError::MalformedResponse(format!("bad embedding at {pos}")))?;
            let slot = out
                .get_mut(idx)
                .ok_or_else(|| LlmError::MalformedResponse(format!("index {idx} out of range")))?;
            *slot = Some(vec);
        }
        out.into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| LlmError::MalformedResponse(format!("no embedding for input {i}"))))
            .collect()
    }
}

impl ChatModel for Gateway {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        req.validate()?;
        let tokens = approx_tokens(&req.prompt_text());
        if tokens > self.cfg.chat_token_limit {
            return Err(LlmError::TooLong {
                tokens,
                limit: self.cfg.chat_token_limit,
            });
        }
        self.requests.fetch_add(1, Ordering::Relaxed);
        let hash = req.hash();
        let path = self.transcript_path(&hash);
        if self.cfg.mode != GatewayMode::Live {
            if let Some(p) = path.as_ref().filter(|p| p.exists()) {
                let t: Transcript = read_json(p).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
                self.replayed.fetch_add(1, Ordering::Relaxed);
                return Ok(t.response);
            }
            if self.cfg.mode == GatewayMode::Replay {
                return Err(LlmError::ReplayMiss(hash));
            }
        }
        let start = Instant::now();
        let response = self.chat_live(req)?;
        if self.cfg.mode == GatewayMode::Record {
            if let Some(p) = path {
                let t = Transcript {
                    hash,
                    response: response.clone(),
                    latency_ms: start.elapsed().as_millis() as u64,
                    mode: GatewayMode::Live,
                    request: Some(req.clone()),
                };
                write_json(&p, &t).map_err(|e| LlmError::Transport(e.to_string()))?;
            }
        }
        Ok(response)
    }

    /// Runs up to `max_inflight` requests at once; results keep request order.
    fn chat_batch(&self, reqs: &[ChatRequest]) -> Vec<Result<String, LlmError>> {
        let workers = self.cfg.max_inflight.clamp(1, reqs.len().max(1));
        if workers == 1 {
            return reqs.iter().map(|r| self.chat(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<String, LlmError>>>> = Mutex::new(vec![None; reqs.len()]);
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.chat(&reqs[i]);
                    results.lock().expect("results lock")[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|r| r.expect("every index answered"))
            .collect()
    }

    fn model_name(&self) -> &str {
        &self.cfg.chat_model
    }
}

impl Embedder for Gateway {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        for t in texts {
            let tokens = approx_tokens(t);
            if tokens > self.cfg.embed_token_limit {
                return Err(LlmError::TooLong {
                    tokens,
                    limit: self.cfg.embed_token_limit,
                });
            }
        }
        let model = self.cfg.embed_model.clone();
        let hashes: Vec<String> = texts.iter().map(|t| embedding_hash(&model, t)).collect();
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        if self.cfg.mode != GatewayMode::Live {
            for (i, h) in hashes.iter().enumerate() {
                if let Some(p) = self.embed_transcript_path(h).filter(|p| p.exists()) {
                    let t: EmbeddingTranscript = read_json(&p).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
                    out[i] = Some(t.vector);
                }
            }
        }
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if self.cfg.mode == GatewayMode::Replay {
            if let Some(&i) = missing.first() {
                return Err(LlmError::ReplayMiss(hashes[i].clone()));
            }
        }
        for chunk in missing.chunks(self.cfg.embed_batch.max(1)) {
            self.requests.fetch_add(1, Ordering::Relaxed);
            let batch: Vec<String> = chunk.iter().map(|&i| texts[i].clone()).collect();
            let vecs = self.embed_live(&batch)?;
            for (&i, v) in chunk.iter().zip(vecs) {
                if self.cfg.mode == GatewayMode::Record {
                    if let Some(p) = self.embed_transcript_path(&hashes[i]) {
                        let t = EmbeddingTranscript {
                            hash: hashes[i].clone(),
                            model: model.clone(),
                            vector: v.clone(),
                        };
                        write_json(&p, &t).map_err(|e| LlmError::Transport(e.to_string()))?;
                    }
                }
                out[i] = Some(v);
            }
        }
        let out: Vec<Vec<f64>> = out.into_iter().map(|v| v.expect("filled")).collect();
        if let Some(first) = out.first() {
            if let Some(bad) = out.iter().find(|v| v.len() != first.len()) {
                return Err(LlmError::DimensionMismatch {
                    expected: first.len(),
                    got: bad.len(),
                });
            }
        }
        Ok(out)
    }
}
