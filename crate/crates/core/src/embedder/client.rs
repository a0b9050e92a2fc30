use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::metrics::EmbeddingVector;

use super::cache::{cache_key, EmbeddingCache};

pub const MAX_BATCH: usize = 256;
pub const API_KEY_ENV: &str = "HYSIM_API_KEY";

#[derive(Debug, Clone)]
pub struct TransportError {
    pub message: String,
    /// Worth retrying (timeouts, 429, 5xx).
    pub retryable: bool,
}

/// One JSON POST. Implementations must be shareable across threads.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError>;
}

/// Blocking HTTP transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self {
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &Value, timeout: Duration) -> Result<Value, TransportError> {
        let mut req = self.agent.post(url).config().timeout_global(Some(timeout)).build();
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| {
            let retryable = match &e {
                ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
                _ => true,
            };
            TransportError {
                message: e.to_string(),
                retryable,
            }
        })?;
        resp.body_mut().read_json::<Value>().map_err(|e| TransportError {
            message: format!("bad response body: {e}"),
            retryable: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: "text-embedding".into(),
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_initial_ms: 500,
            batch_size: MAX_BATCH,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint.trim().is_empty() {
            return Err(Error::invalid("endpoint", "not configured"));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::invalid("timeout_secs", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > MAX_BATCH {
            return Err(Error::invalid("batch_size", format!("must be in 1..={MAX_BATCH}")));
        }
        Ok(())
    }
}

/// Client for an OpenAI-style embeddings endpoint with a write-through
/// cache. Concurrent callers asking for the same uncached text trigger a
/// single request.
pub struct EmbeddingClient {
    config: EmbedderConfig,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    cache: Arc<EmbeddingCache>,
    fetch: Mutex<()>,
}

impl EmbeddingClient {
    pub fn new(config: EmbedderConfig, transport: Arc<dyn Transport>, cache: Arc<EmbeddingCache>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            transport,
            cache,
            fetch: Mutex::new(()),
        })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Embeds `inputs` in order, serving cached texts without a request.
    pub fn embed_text(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>> {
        if inputs.is_empty() {
            return Err(Error::EmptyCollection);
        }
        let model = &self.config.model;
        let keys: Vec<String> = inputs.iter().map(|s| cache_key(model, s)).collect();
        if keys.iter().any(|k| self.cache.get(k).is_none()) {
            let _guard = self.fetch.lock().expect("fetch lock");
            // re-check under the lock: another caller may have filled these
            let mut pending: Vec<(&String, &String)> = Vec::new();
            let mut seen = HashMap::new();
            for (k, text) in keys.iter().zip(inputs) {
                if self.cache.get(k).is_none() && seen.insert(k, ()).is_none() {
                    pending.push((k, text));
                }
            }
            for chunk in pending.chunks(self.config.batch_size) {
                let texts: Vec<&str> = chunk.iter().map(|(_, t)| t.as_str()).collect();
                let vectors = self.request(&texts)?;
                for ((k, _), v) in chunk.iter().zip(vectors) {
                    self.cache.insert((*k).clone(), v)?;
                }
            }
        }
        let mut out = Vec::with_capacity(inputs.len());
        let mut dim = None;
        for k in &keys {
            let v = self
                .cache
                .get(k)
                .ok_or_else(|| Error::ProviderContract("embedding missing after fetch".into()))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::ProviderContract(format!("mixed dimensions {d} and {}", v.len())))
                }
                _ => {}
            }
            out.push(EmbeddingVector::new(v)?);
        }
        Ok(out)
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let body = json!({ "model": self.config.model, "input": texts });
        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_initial_ms.saturating_mul(1 << (attempt - 1).min(16));
                debug!("retrying in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self
                .transport
                .post_json(&self.config.endpoint, self.api_key.as_deref(), &body, timeout)
            {
                Ok(resp) => return parse_response(&resp, texts.len()),
                Err(e) => {
                    warn!("embedding request attempt {} failed: {}", attempt + 1, e.message);
                    last = e.message;
                    if !e.retryable {
                        return Err(Error::Http {
                            attempts: attempt + 1,
                            message: last,
                        });
                    }
                }
            }
        }
        Err(Error::Http { attempts, message: last })
    }
}

/// Reads `{data: [{embedding: [...], index?}]}`, ordering by `index` when
/// present.
fn parse_response(resp: &Value, expected: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |m: &str| Error::ProviderContract(m.to_string());
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `data` array"))?;
    if data.len() != expected {
        return Err(Error::ProviderContract(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(expected);
    for (pos, item) in data.iter().enumerate() {
        let idx = match item.get("index") {
            Some(i) => i.as_u64().ok_or_else(|| bad("non-integer index"))? as usize,
            None => pos,
        };
        let emb = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `embedding`"))?
            .iter()
            .map(|x| x.as_f64().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("non-numeric embedding component"))?;
        rows.push((idx, emb));
    }
    rows.sort_by_key(|(i, _)| *i);
    if rows.iter().enumerate().any(|(i, (j, _))| i != *j) {
        return Err(bad("indices are not a permutation of the batch"));
    }
    let d = rows[0].1.len();
    if d == 0 || rows.iter().any(|(_, v)| v.len() != d) {
        return Err(bad("inconsistent embedding dimension"));
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}
